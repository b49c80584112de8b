//! Run configuration and the end-to-end pipelines behind the command line:
//! mesh → assembly → search → eigenpair extraction, convergence studies
//! across refinement levels, the disk oracle, and artifact emission.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use num_complex::Complex64;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::assembly::{AssemblyError, OperatorBundle, QuadRule};
use crate::linalg::norm2;
use crate::mesh::{mesh_at_level, MeshError, MeshStats};
use crate::oracle::{contour_map, oracle_roots, DiskProblem, OracleError};
use crate::potential::{parse_potential, PotentialError, PotentialSpec};
use crate::sim::{
    indicator_with, probe_vector, search, search_regions, FemOperator, Indicator, OperatorFunction, ResonanceResult, ScalarFunction,
    SearchOutcome, SearchRect, SearchRegion, SimConfig, SimError, SQUARE_MARGIN,
};

type C = Complex64;

pub const MAX_LEVEL: u32 = 5;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error{}: {msg}", .line.map(|l| format!(" at line {l}")).unwrap_or_default())]
    Config { line: Option<usize>, msg: String },
    #[error("numerical failure at level {level}: {source}")]
    Numerical {
        level: u32,
        #[source]
        source: SimError,
    },
    #[error("resonance {track} lost between levels {from} and {to}: {reason}")]
    Match { track: usize, from: u32, to: u32, reason: String },
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Assembly(#[from] AssemblyError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    fn config(line: Option<usize>, msg: impl Into<String>) -> CliError {
        CliError::Config { line, msg: msg.into() }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config { .. } | CliError::Io { .. } => 2,
            _ => 3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Solve,
    Converge,
    OracleRoots,
    OracleMap,
    IndicatorProbe,
    AssembleCheck,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Solve => "solve",
            Mode::Converge => "converge",
            Mode::OracleRoots => "oracle-roots",
            Mode::OracleMap => "oracle-map",
            Mode::IndicatorProbe => "indicator-probe",
            Mode::AssembleCheck => "assemble-check",
        }
    }

    fn parse(s: &str) -> Option<Mode> {
        [Mode::Solve, Mode::Converge, Mode::OracleRoots, Mode::OracleMap, Mode::IndicatorProbe, Mode::AssembleCheck]
            .into_iter()
            .find(|m| m.as_str() == s)
    }
}

/// How `converge` obtains the resonance at each level.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Strategy {
    /// Full search of Θ at the first level, then windowed searches around
    /// each tracked value at every level.
    Track,
    /// Full search of Θ at every level.
    Full,
}

impl Strategy {
    fn as_str(self) -> &'static str {
        match self {
            Strategy::Track => "track",
            Strategy::Full => "full",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    /// Potential block, verbatim.
    pub potential: String,
    pub radius: f64,
    /// Mesh size of level 1.
    pub base_h: f64,
    /// Mesh level for `solve`, finest level for `converge`.
    pub level: u32,
    /// DtN truncation N.
    pub modes: usize,
    pub quadrature: QuadRule,
    pub theta: SearchRect,
    pub sim: SimConfig,
    /// Number of smallest-|k| resonances followed by `converge`.
    pub track: usize,
    pub track_tol_eps: f64,
    /// Half-width of the tracking window.
    pub track_window: f64,
    pub strategy: Strategy,
    /// Largest angular order for the disk oracle.
    pub n_max: usize,
    pub grid_step: f64,
    pub map_resolution: usize,
    pub out_dir: PathBuf,
    pub mode: Mode,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            potential: String::new(),
            radius: 1.0,
            base_h: 0.05,
            level: 1,
            modes: 20,
            quadrature: QuadRule::SevenPoint,
            theta: SearchRect::lower_band(),
            sim: SimConfig::default(),
            track: 2,
            track_tol_eps: 5e-6,
            track_window: 0.03,
            strategy: Strategy::Track,
            n_max: 10,
            grid_step: 0.05,
            map_resolution: 256,
            out_dir: PathBuf::from("out"),
            mode: Mode::Solve,
        }
    }
}

fn parse_num<T: std::str::FromStr>(line: usize, key: &str, v: &str) -> Result<T, CliError> {
    v.parse().map_err(|_| CliError::config(Some(line), format!("bad value for {key}: {v:?}")))
}

impl RunConfig {
    /// Parses the sectioned config format: `[domain]`, `[search]` and
    /// `[output]` hold `key = value` lines, `[potential]` holds the potential
    /// definition verbatim. `#` starts a comment line.
    pub fn parse(text: &str) -> Result<RunConfig, CliError> {
        let mut cfg = RunConfig::default();
        let mut section = String::new();
        let mut potential = Vec::new();
        let mut potential_lines = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let t = raw.trim();
            if t.is_empty() || t.starts_with('#') {
                continue;
            }
            if t.starts_with('[') && t.ends_with(']') {
                section = t[1..t.len() - 1].trim().to_string();
                if !["domain", "potential", "search", "output"].contains(&section.as_str()) {
                    return Err(CliError::config(Some(line), format!("unknown section [{section}]")));
                }
                continue;
            }
            if section == "potential" {
                potential_lines.push(line);
                potential.push(t.to_string());
                continue;
            }
            let Some((k, v)) = t.split_once('=') else {
                return Err(CliError::config(Some(line), format!("expected key = value, got {t:?}")));
            };
            let (k, v) = (k.trim(), v.trim());
            match (section.as_str(), k) {
                ("domain", "radius") => cfg.radius = parse_num(line, k, v)?,
                ("domain", "base_h") => cfg.base_h = parse_num(line, k, v)?,
                ("domain", "level") => cfg.level = parse_num(line, k, v)?,
                ("domain", "modes") => cfg.modes = parse_num(line, k, v)?,
                ("domain", "quadrature") => {
                    cfg.quadrature = QuadRule::from_points(parse_num(line, k, v)?)
                        .ok_or_else(|| CliError::config(Some(line), "quadrature must be 3 or 7"))?
                }
                ("search", "re_min") => cfg.theta.re_min = parse_num(line, k, v)?,
                ("search", "re_max") => cfg.theta.re_max = parse_num(line, k, v)?,
                ("search", "im_min") => cfg.theta.im_min = parse_num(line, k, v)?,
                ("search", "im_max") => cfg.theta.im_max = parse_num(line, k, v)?,
                ("search", "n_points") => cfg.sim.n_points = parse_num(line, k, v)?,
                ("search", "tol_ind") => cfg.sim.tol_ind = parse_num(line, k, v)?,
                ("search", "tol_eps") => cfg.sim.tol_eps = parse_num(line, k, v)?,
                ("search", "r0") => cfg.sim.r0 = parse_num(line, k, v)?,
                ("search", "seed") => cfg.sim.seed = parse_num(line, k, v)?,
                ("search", "max_levels") => cfg.sim.max_levels = parse_num(line, k, v)?,
                ("search", "max_live") => cfg.sim.max_live = parse_num(line, k, v)?,
                ("search", "track") => cfg.track = parse_num(line, k, v)?,
                ("search", "track_tol_eps") => cfg.track_tol_eps = parse_num(line, k, v)?,
                ("search", "track_window") => cfg.track_window = parse_num(line, k, v)?,
                ("search", "strategy") => {
                    cfg.strategy = match v {
                        "track" => Strategy::Track,
                        "full" => Strategy::Full,
                        _ => return Err(CliError::config(Some(line), format!("strategy must be track or full, got {v:?}"))),
                    }
                }
                ("search", "n_max") => cfg.n_max = parse_num(line, k, v)?,
                ("search", "grid_step") => cfg.grid_step = parse_num(line, k, v)?,
                ("output", "dir") => cfg.out_dir = PathBuf::from(v),
                ("output", "map_resolution") => cfg.map_resolution = parse_num(line, k, v)?,
                ("output", "mode") => cfg.mode = Mode::parse(v).ok_or_else(|| CliError::config(Some(line), format!("unknown mode {v:?}")))?,
                ("", _) => return Err(CliError::config(Some(line), "key outside of any section")),
                (s, _) => return Err(CliError::config(Some(line), format!("unknown key {k:?} in [{s}]"))),
            }
        }
        cfg.potential = potential.join("\n");
        cfg.validate().map_err(|e| match e {
            // potential errors are reported against the whole file
            CliError::Config { line: Some(l), msg } if msg.starts_with("potential") => {
                CliError::Config { line: potential_lines.get(l - 1).copied(), msg }
            }
            e => e,
        })?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<RunConfig, CliError> {
        let text = std::fs::read_to_string(path).map_err(|source| CliError::Io { path: path.to_path_buf(), source })?;
        RunConfig::parse(&text)
    }

    pub fn potential_spec(&self) -> Result<PotentialSpec, CliError> {
        parse_potential(&self.potential).map_err(|e| {
            let line = match &e {
                PotentialError::Syntax { line, .. } | PotentialError::Semantic { line, .. } => Some(*line),
                PotentialError::Eval { .. } => None,
            };
            CliError::config(line, format!("potential: {e}"))
        })
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let spec = self.potential_spec()?;
        if !(self.radius > 0.0) {
            return Err(CliError::config(None, "radius must be positive"));
        }
        if spec.support > self.radius * (1.0 + 1e-12) {
            return Err(CliError::config(None, format!("potential support {} exceeds the domain radius {}", spec.support, self.radius)));
        }
        if !(self.base_h > 0.0 && self.base_h < self.radius) {
            return Err(CliError::config(None, "base_h must lie in (0, radius)"));
        }
        if !(1..=MAX_LEVEL).contains(&self.level) {
            return Err(CliError::config(None, format!("level must lie in [1, {MAX_LEVEL}], got {}", self.level)));
        }
        SearchRect::new(self.theta.re_min, self.theta.re_max, self.theta.im_min, self.theta.im_max)
            .map_err(|e| CliError::config(None, e.to_string()))?;
        if !(self.theta.im_max < 0.0) {
            return Err(CliError::config(None, "the search rectangle must lie in the lower half-plane (im_max < 0)"));
        }
        self.sim.validate().map_err(|e| CliError::config(None, e.to_string()))?;
        if !(self.track_tol_eps > 0.0 && self.track_window > self.track_tol_eps) {
            return Err(CliError::config(None, "need 0 < track_tol_eps < track_window"));
        }
        if !(self.grid_step > 0.0) || self.map_resolution < 16 {
            return Err(CliError::config(None, "grid_step must be positive and map_resolution at least 16"));
        }
        Ok(())
    }

    /// Canonical text form; parses back to an equal config.
    pub fn to_ini(&self) -> String {
        let mut s = String::new();
        let t = &self.theta;
        let c = &self.sim;
        writeln!(s, "[domain]").unwrap();
        writeln!(s, "radius = {}\nbase_h = {}\nlevel = {}\nmodes = {}\nquadrature = {}", self.radius, self.base_h, self.level, self.modes, self.quadrature.points()).unwrap();
        writeln!(s, "\n[potential]\n{}", self.potential).unwrap();
        writeln!(s, "\n[search]").unwrap();
        writeln!(s, "re_min = {}\nre_max = {}\nim_min = {}\nim_max = {}", t.re_min, t.re_max, t.im_min, t.im_max).unwrap();
        writeln!(s, "n_points = {}\ntol_ind = {}\ntol_eps = {}\nr0 = {}\nseed = {}\nmax_levels = {}\nmax_live = {}", c.n_points, c.tol_ind, c.tol_eps, c.r0, c.seed, c.max_levels, c.max_live).unwrap();
        writeln!(s, "track = {}\ntrack_tol_eps = {}\ntrack_window = {}\nstrategy = {}", self.track, self.track_tol_eps, self.track_window, self.strategy.as_str()).unwrap();
        writeln!(s, "n_max = {}\ngrid_step = {}", self.n_max, self.grid_step).unwrap();
        writeln!(s, "\n[output]\ndir = {}\nmap_resolution = {}\nmode = {}", self.out_dir.display(), self.map_resolution, self.mode.as_str()).unwrap();
        s
    }
}

/// Assembled operator for one level.
pub struct Problem {
    pub level: u32,
    pub op: FemOperator,
    pub mesh: MeshStats,
    pub mesh_area: f64,
    pub mesh_seconds: f64,
    pub assembly_seconds: f64,
}

pub fn prepare(cfg: &RunConfig, level: u32) -> Result<Problem, CliError> {
    let spec = cfg.potential_spec()?;
    let t = Instant::now();
    let mesh = mesh_at_level(cfg.radius, cfg.base_h, level)?;
    let mesh_seconds = t.elapsed().as_secs_f64();
    let t = Instant::now();
    let bundle = OperatorBundle::assemble(&mesh, &spec, cfg.modes, cfg.quadrature)?;
    let op = FemOperator::new(bundle).map_err(|source| CliError::Numerical { level, source })?;
    Ok(Problem {
        level,
        op,
        mesh: mesh.stats(),
        mesh_area: mesh.area(),
        mesh_seconds,
        assembly_seconds: t.elapsed().as_secs_f64(),
    })
}

pub struct SolveRun {
    pub level: u32,
    pub outcome: SearchOutcome,
    pub mesh: MeshStats,
    pub timings: Vec<(&'static str, f64)>,
}

impl SolveRun {
    pub fn eigenvalues(&self) -> Vec<C> {
        self.outcome.eigenvalues()
    }
}

/// Full search of Θ at one level.
pub fn run_solve(cfg: &RunConfig, level: u32) -> Result<SolveRun, CliError> {
    let p = prepare(cfg, level)?;
    let t = Instant::now();
    let outcome = search(&p.op, &cfg.theta, &cfg.sim).map_err(|source| CliError::Numerical { level, source })?;
    Ok(SolveRun {
        level,
        outcome,
        mesh: p.mesh,
        timings: vec![("mesh", p.mesh_seconds), ("assembly", p.assembly_seconds), ("search", t.elapsed().as_secs_f64())],
    })
}

/// Searches a square window containing `center ± half` (both axes) down to
/// `tol_eps`.
pub fn search_window<P: OperatorFunction + ?Sized>(
    provider: &P,
    center: C,
    half: f64,
    base: &SimConfig,
    tol_eps: f64,
) -> Result<SearchOutcome, SimError> {
    // Off-centre so the tracked value does not sit on a corner shared by
    // four quadrants at every level (all four would be flagged).
    let mid = center + C::new(0.23, 0.31) * half;
    let span = 1.6 * half;
    let window = SearchRect::new(mid.re - span, mid.re + span, mid.im - span, mid.im + span)?;
    // one level-1 square exactly covering the window
    let r0 = span * std::f64::consts::SQRT_2 / SQUARE_MARGIN;
    let cfg = SimConfig { r0, tol_eps, ..base.clone() };
    cfg.validate()?;
    let f = probe_vector(provider.dim(), cfg.seed);
    search_regions(provider, &window, vec![SearchRegion::new(mid, r0)], &f, &cfg)
}

pub fn resonance_csv(level: u32, results: &[ResonanceResult]) -> String {
    let mut s = String::from("re, im, residual, level, final_level, origin_re, origin_im, converged\n");
    for r in results {
        let origin = r.provenance.centers.first().copied().unwrap_or(r.k);
        writeln!(
            s,
            "{:.6}, {:.6}, {:.6e}, {}, {}, {:.6}, {:.6}, {}",
            r.k.re, r.k.im, r.residual, level, r.provenance.final_level, origin.re, origin.im, r.converged
        )
        .unwrap();
    }
    s
}

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Writes named files into `dir` and returns their manifest entries.
fn write_files(dir: &Path, files: &[(&str, String)]) -> Result<Vec<Value>, CliError> {
    std::fs::create_dir_all(dir).map_err(|source| CliError::Io { path: dir.to_path_buf(), source })?;
    let mut entries = Vec::new();
    for (name, content) in files {
        let path = dir.join(name);
        std::fs::write(&path, content).map_err(|source| CliError::Io { path: path.clone(), source })?;
        entries.push(json!({ "name": name, "sha256": sha256_hex(content.as_bytes()), "bytes": content.len() }));
    }
    Ok(entries)
}

fn write_manifest(dir: &Path, cfg: &RunConfig, command: &str, mut body: Value, files: Vec<Value>) -> Result<PathBuf, CliError> {
    body["command"] = json!(command);
    body["config"] = json!(cfg.to_ini());
    body["files"] = Value::Array(files);
    let path = dir.join("manifest.json");
    let text = serde_json::to_string_pretty(&body).expect("manifest serialises");
    std::fs::write(&path, text + "\n").map_err(|source| CliError::Io { path: path.clone(), source })?;
    Ok(path)
}

fn mesh_json(m: &MeshStats) -> Value {
    json!({ "h": m.h, "min_angle": m.min_angle, "vertices": m.n_vertices, "triangles": m.n_triangles, "boundary": m.n_boundary })
}

fn timings_json(t: &[(&str, f64)]) -> Value {
    Value::Object(t.iter().map(|(k, v)| (k.to_string(), json!(v))).collect())
}

/// Writes `resonances.csv`, `trace.log` and `manifest.json`.
pub fn write_solve_artifacts(cfg: &RunConfig, run: &SolveRun, dir: &Path) -> Result<PathBuf, CliError> {
    let files = write_files(
        dir,
        &[("resonances.csv", resonance_csv(run.level, &run.outcome.results)), ("trace.log", run.outcome.trace_text())],
    )?;
    let results: Vec<Value> = run
        .outcome
        .results
        .iter()
        .map(|r| {
            json!({
                "re": r.k.re, "im": r.k.im, "residual": r.residual, "norm_inf": r.norm_inf,
                "lambda": [r.lambda.re, r.lambda.im], "converged": r.converged,
                "final_level": r.provenance.final_level, "cluster_size": r.provenance.cluster_size,
                "centers": r.provenance.centers.iter().map(|c| [c.re, c.im]).collect::<Vec<_>>(),
                "indicators": r.indicator_trace,
            })
        })
        .collect();
    let body = json!({
        "level": run.level,
        "mesh": mesh_json(&run.mesh),
        "timings": timings_json(&run.timings),
        "search": { "levels": run.outcome.levels, "regions": run.outcome.trace.len(), "solves": run.outcome.solves },
        "resonances": results,
    });
    write_manifest(dir, cfg, "solve", body, files)
}

/// Values of one tracked resonance across levels.
#[derive(Debug, Clone, PartialEq)]
pub struct Track {
    pub values: Vec<C>,
    /// `E_j = |k^j − k^{j+1}| / |k^{j+1}|`.
    pub errors: Vec<f64>,
    /// `log2(E_j / E_{j+1})`; NaN where an error vanishes.
    pub orders: Vec<f64>,
    /// Some consecutive levels gave identical values.
    pub exact: bool,
}

impl Track {
    pub fn from_values(values: Vec<C>) -> Track {
        let errors: Vec<f64> = values.windows(2).map(|w| (w[0] - w[1]).norm() / w[1].norm()).collect();
        let orders = errors
            .windows(2)
            .map(|e| if e[0] > 0.0 && e[1] > 0.0 { (e[0] / e[1]).log2() } else { f64::NAN })
            .collect();
        let exact = errors.iter().any(|&e| e == 0.0);
        Track { values, errors, orders, exact }
    }

    /// Richardson extrapolation of the last two levels for an O(h²) error.
    pub fn richardson(&self) -> Option<C> {
        let n = self.values.len();
        (n >= 2).then(|| richardson(self.values[n - 2], self.values[n - 1]))
    }
}

/// `fine + (fine − coarse)/3`: the h → 0 limit when the error is O(h²) and
/// h halves between the two levels.
pub fn richardson(coarse: C, fine: C) -> C {
    fine + (fine - coarse) / 3.0
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceReport {
    pub levels: Vec<u32>,
    pub tracks: Vec<Track>,
}

impl ConvergenceReport {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("track, level, re, im, rel_error, order\n");
        for (t, tr) in self.tracks.iter().enumerate() {
            for (j, (lvl, k)) in self.levels.iter().zip(&tr.values).enumerate() {
                let e = tr.errors.get(j).map_or(String::new(), |e| format!("{e:.6e}"));
                let o = match j.checked_sub(1).and_then(|i| tr.orders.get(i)) {
                    Some(o) if o.is_finite() => format!("{o:.2}"),
                    Some(_) => "exact".into(),
                    None => String::new(),
                };
                writeln!(s, "{}, {}, {:.6}, {:.6}, {}, {}", t + 1, lvl, k.re, k.im, e, o).unwrap();
            }
        }
        s
    }
}

fn nearest(points: &[C], z: C) -> Option<usize> {
    (0..points.len()).min_by(|&a, &b| (points[a] - z).norm().total_cmp(&(points[b] - z).norm()))
}

/// Matches each tracked value to a candidate at the next level. A pair is
/// kept only if it is a mutual nearest neighbour (so matching j → j+1 and
/// j+1 → j agree) and its distance is at most 10× the median drift of all
/// tracked values.
pub fn match_levels(tracked: &[C], candidates: &[C]) -> Result<Vec<usize>, (usize, String)> {
    let mut picks = Vec::with_capacity(tracked.len());
    for (t, &k) in tracked.iter().enumerate() {
        let j = nearest(candidates, k).ok_or((t, "no candidates at the next level".to_string()))?;
        if nearest(tracked, candidates[j]) != Some(t) {
            return Err((t, format!("{} is closer to another tracked resonance", candidates[j])));
        }
        picks.push(j);
    }
    let mut drifts: Vec<f64> = tracked.iter().zip(&picks).map(|(k, &j)| (candidates[j] - k).norm()).collect();
    let all = drifts.clone();
    drifts.sort_by(f64::total_cmp);
    let median = drifts[(drifts.len() - 1) / 2];
    for (t, d) in all.iter().enumerate() {
        if *d > 10.0 * median {
            return Err((t, format!("drift {d:.3e} exceeds 10x the median drift {median:.3e}")));
        }
    }
    Ok(picks)
}

/// The `count` smallest-|k| values, in order of |k|.
pub fn smallest(values: &[C], count: usize) -> Vec<C> {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.norm().total_cmp(&b.norm()).then(a.re.total_cmp(&b.re)));
    v.truncate(count);
    v
}

/// Progress callback: (level, message).
pub type Progress<'a> = &'a dyn Fn(u32, &str);

pub fn run_converge(cfg: &RunConfig, progress: Progress) -> Result<ConvergenceReport, CliError> {
    run_converge_from(cfg, &[], progress)
}

/// [`run_converge`] with given starting values for the tracked resonances
/// (tracking strategy only). An empty `start` selects the `cfg.track`
/// smallest-|k| resonances of a full level-1 search.
pub fn run_converge_from(cfg: &RunConfig, start: &[C], progress: Progress) -> Result<ConvergenceReport, CliError> {
    if cfg.level < 3 {
        return Err(CliError::config(None, "converge needs level >= 3 (three consecutive levels)"));
    }
    let levels: Vec<u32> = (1..=cfg.level).collect();
    let mut values: Vec<Vec<C>> = Vec::new();
    let mut tracked: Vec<C> = if cfg.strategy == Strategy::Track { start.to_vec() } else { Vec::new() };
    let mut drift: Vec<f64> = vec![0.0; tracked.len()];
    for &level in &levels {
        let p = prepare(cfg, level)?;
        let numerical = |source| CliError::Numerical { level, source };
        let candidates: Vec<C> = match cfg.strategy {
            Strategy::Full => search(&p.op, &cfg.theta, &cfg.sim).map_err(numerical)?.eigenvalues(),
            Strategy::Track => {
                if tracked.is_empty() {
                    let all = search(&p.op, &cfg.theta, &cfg.sim).map_err(numerical)?.eigenvalues();
                    tracked = smallest(&all, cfg.track);
                    drift = vec![0.0; tracked.len()];
                    progress(level, &format!("tracking {} of {} resonances", tracked.len(), all.len()));
                }
                let mut found = Vec::new();
                for (t, &k) in tracked.iter().enumerate() {
                    let half = cfg.track_window.max(4.0 * drift[t]);
                    let out = search_window(&p.op, k, half, &cfg.sim, cfg.track_tol_eps).map_err(numerical)?;
                    found.extend(out.eigenvalues());
                }
                found
            }
        };
        if tracked.is_empty() {
            tracked = smallest(&candidates, cfg.track);
            drift = vec![0.0; tracked.len()];
        }
        if tracked.is_empty() {
            return Err(CliError::Match { track: 0, from: level, to: level, reason: "no resonances in the search rectangle".into() });
        }
        let picks = match_levels(&tracked, &candidates).map_err(|(t, reason)| CliError::Match {
            track: t + 1,
            from: level.saturating_sub(1).max(1),
            to: level,
            reason,
        })?;
        let next: Vec<C> = picks.iter().map(|&j| candidates[j]).collect();
        if !values.is_empty() {
            drift = tracked.iter().zip(&next).map(|(a, b)| (a - b).norm()).collect();
        }
        progress(level, &next.iter().map(|k| format!("{k:.6}")).collect::<Vec<_>>().join("  "));
        values.push(next.clone());
        tracked = next;
    }
    let tracks = (0..tracked.len()).map(|t| Track::from_values(values.iter().map(|v| v[t]).collect())).collect();
    Ok(ConvergenceReport { levels, tracks })
}

pub fn write_converge_artifacts(cfg: &RunConfig, report: &ConvergenceReport, dir: &Path) -> Result<PathBuf, CliError> {
    let files = write_files(dir, &[("convergence.csv", report.to_csv())])?;
    let tracks: Vec<Value> = report
        .tracks
        .iter()
        .map(|t| {
            json!({
                "values": t.values.iter().map(|k| [k.re, k.im]).collect::<Vec<_>>(),
                "errors": t.errors,
                "orders": t.orders.iter().map(|o| if o.is_finite() { json!(o) } else { Value::Null }).collect::<Vec<_>>(),
                "exact": t.exact,
                "richardson": t.richardson().map(|k| [k.re, k.im]),
            })
        })
        .collect();
    write_manifest(dir, cfg, "converge", json!({ "levels": report.levels, "tracks": tracks }), files)
}

/// The disk problem declared by a constant-disk potential.
pub fn disk_problem(cfg: &RunConfig) -> Result<DiskProblem, CliError> {
    let spec = cfg.potential_spec()?;
    let (r0, v0) = spec
        .as_constant_disk()
        .ok_or_else(|| CliError::config(None, "the oracle needs a constant potential on a centred disk"))?;
    Ok(DiskProblem::new(r0, v0, cfg.n_max)?)
}

pub fn run_oracle_roots(cfg: &RunConfig, dir: &Path) -> Result<(usize, PathBuf), CliError> {
    let problem = disk_problem(cfg)?;
    let roots = oracle_roots(&problem, &cfg.theta, cfg.grid_step)?;
    let files = write_files(dir, &[("roots.csv", roots.to_csv())])?;
    let body = json!({ "roots": roots.roots.len(), "dropped": roots.dropped });
    Ok((roots.roots.len(), write_manifest(dir, cfg, "oracle roots", body, files)?))
}

pub fn run_oracle_map(cfg: &RunConfig, dir: &Path) -> Result<PathBuf, CliError> {
    let problem = disk_problem(cfg)?;
    let map = contour_map(&problem, &cfg.theta, cfg.map_resolution)?;
    let files = write_files(dir, &[("map.csv", map.to_csv())])?;
    write_manifest(dir, cfg, "oracle map", json!({ "resolution": map.resolution }), files)
}

#[derive(Debug, Clone)]
pub struct ProbeReport {
    pub indicator: Indicator,
    /// `‖F(z_j) x_j − f‖₂ / ‖f‖₂` per quadrature node.
    pub node_residuals: Vec<f64>,
}

impl ProbeReport {
    pub fn to_text(&self) -> String {
        let i = &self.indicator;
        let mut s = format!(
            "indicator {:.6e}\nnorm_full {:.6e}\nnorm_half {:.6e}\ndegenerate {}\n",
            i.value, i.norm_full, i.norm_half, i.degenerate
        );
        for (j, r) in self.node_residuals.iter().enumerate() {
            writeln!(s, "node {j} residual {r:.3e}").unwrap();
        }
        s
    }
}

pub fn probe<P: OperatorFunction + ?Sized>(provider: &P, region: &SearchRegion, sim: &SimConfig) -> Result<ProbeReport, SimError> {
    let f = probe_vector(provider.dim(), sim.seed);
    let indicator = indicator_with(provider, region, &f, sim.n_points)?;
    let fnorm = norm2(&f);
    let node_residuals = region
        .nodes(sim.n_points, 0.0)
        .into_iter()
        .map(|z| {
            let x = provider.solve(z, &f)?;
            let r: Vec<C> = provider.apply(z, &x)?.iter().zip(&f).map(|(a, b)| a - b).collect();
            Ok(norm2(&r) / fnorm)
        })
        .collect::<Result<_, SimError>>()?;
    Ok(ProbeReport { indicator, node_residuals })
}

pub fn run_indicator_probe(cfg: &RunConfig, level: u32, center: C, radius: f64) -> Result<ProbeReport, CliError> {
    let p = prepare(cfg, level)?;
    probe(&p.op, &SearchRegion::new(center, radius), &cfg.sim).map_err(|source| CliError::Numerical { level, source })
}

/// Built-in scalar problem `F(z) = z − λ` with λ inside the region.
pub fn indicator_self_test(center: C, radius: f64, sim: &SimConfig) -> Result<ProbeReport, SimError> {
    let lambda = center + C::from_polar(0.3 * radius, 1.0);
    probe(&ScalarFunction(move |z: C| z - lambda), &SearchRegion::new(center, radius), sim)
}

/// Sanity checks of an assembled operator, one line per check.
pub fn run_assemble_check(cfg: &RunConfig, level: u32) -> Result<Vec<(String, f64, bool)>, CliError> {
    let p = prepare(cfg, level)?;
    let b = p.op.bundle();
    let n = b.dim();
    let ones = vec![C::new(1.0, 0.0); n];
    let s1 = b.stiffness.mul_vec(&ones).map_err(AssemblyError::from)?;
    let s_kernel = s1.iter().map(|v| v.norm()).fold(0.0, f64::max) / b.stiffness.norm_inf();
    let mass_sum: C = b.mass.mul_vec(&ones).map_err(AssemblyError::from)?.iter().sum();
    let c0: f64 = b.modes.c(0).iter().sum();
    let k = C::new(0.5, -1.0);
    let f = b.assemble_f(k)?;
    let asym = f.asymmetry() / f.norm_inf();
    let two_pi = std::f64::consts::TAU;
    Ok(vec![
        ("stiffness kernel |S 1|/|S|".into(), s_kernel, s_kernel <= 1e-12),
        ("mass sum - mesh area".into(), (mass_sum - p.mesh_area).norm(), (mass_sum - p.mesh_area).norm() <= 1e-10),
        ("sum c_0 - 2 pi".into(), (c0 - two_pi).abs(), (c0 - two_pi).abs() <= 1e-12),
        ("F(0.5-1i) asymmetry".into(), asym, asym <= 1e-14),
        ("unknowns".into(), n as f64, true),
        ("mesh h".into(), p.mesh.h, true),
    ])
}

#[cfg(test)]
mod tests {
    use super::*;

    const EXAMPLE: &str = "\
# disk with V = 2
[domain]
level = 2

[potential]
support 1
piece disk(0,0;1): 2

[search]
tol_eps = 0.001
seed = 7

[output]
dir = out/ex1
";

    #[test]
    fn parses_and_round_trips() {
        let cfg = RunConfig::parse(EXAMPLE).unwrap();
        assert_eq!(cfg.level, 2);
        assert_eq!(cfg.sim.seed, 7);
        assert_eq!(cfg.theta, SearchRect::lower_band());
        assert_eq!(RunConfig::parse(&cfg.to_ini()).unwrap(), cfg);
    }

    #[test]
    fn config_errors_carry_lines() {
        let bad = EXAMPLE.replace("level = 2", "level = two");
        assert!(matches!(RunConfig::parse(&bad), Err(CliError::Config { line: Some(3), .. })));
        let bad = EXAMPLE.replace("piece disk(0,0;1): 2", "piece disk(0,0;1) 2");
        match RunConfig::parse(&bad) {
            Err(CliError::Config { line: Some(7), .. }) => {}
            other => panic!("{other:?}"),
        }
        let upper = EXAMPLE.replace("seed = 7", "im_max = 0.5");
        assert_eq!(RunConfig::parse(&upper).unwrap_err().exit_code(), 2);
        assert!(RunConfig::parse(&EXAMPLE.replace("level = 2", "level = 6")).is_err());
    }

    #[test]
    fn identical_values_converge_exactly() {
        let k = C::new(-0.8, -1.3);
        let t = Track::from_values(vec![k; 4]);
        assert!(t.exact);
        assert!(t.errors.iter().all(|&e| e == 0.0));
        assert!(t.orders.iter().all(|o| o.is_nan()));
    }

    #[test]
    fn second_order_sequence() {
        let lim = C::new(1.0, -1.0);
        let vals: Vec<C> = (0..4).map(|j| lim + C::new(0.3, 0.1) * 0.25f64.powi(j)).collect();
        let t = Track::from_values(vals);
        assert!(t.orders.iter().all(|o| (o - 2.0).abs() < 0.05), "{:?}", t.orders);
        assert!((t.richardson().unwrap() - lim).norm() < 1e-12);
    }

    #[test]
    fn matching_is_symmetric_and_guarded() {
        let a = [C::new(0.0, -1.0), C::new(1.0, -2.0)];
        let b = [C::new(1.01, -2.0), C::new(5.0, -3.0), C::new(0.01, -1.0)];
        assert_eq!(match_levels(&a, &b).unwrap(), vec![2, 0]);
        let back: Vec<C> = [2, 0].iter().map(|&j| b[j]).collect();
        assert_eq!(match_levels(&back, &a).unwrap(), vec![0, 1]);
        let far = [C::new(1.01, -2.0), C::new(0.5, -1.0)];
        assert!(match_levels(&a, &far).is_err());
    }
}
