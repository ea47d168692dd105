//! Declarative scenarios and the reports they produce.
//!
//! A scenario names a kind of run, the spaces and fibers involved, where the
//! unitary comes from and the numeric parameters. [`run`] executes it and
//! returns a JSON report, an optional CSV table and stage timings. Timings are
//! kept out of the report so identical inputs give identical report bytes.

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::coarse_maps::{closeness, CoarseMap};
use crate::concentration::concentration_witness_sweep;
use crate::covering::{covering_unitary, outer_roundtrip, supported_approximation_curve, CoveringOptions};
use crate::error::{Error, Result};
use crate::extraction::{extract_pair, DEFAULT_DELTA};
use crate::format::{load_operator, save_operator};
use crate::locality::{approximability_window, quasi_locality_violation, LocalityConfig, Mode};
use crate::metric_space::FiniteMetricSpace;
use crate::operators::{random_band_unitary, BlockOperator, FiberedSpace, DEFAULT_PROPAGATION_TOL};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
const WINDOW_SLACK: f64 = 1e-12;
const COVER_UNITARITY_TOL: f64 = 1e-12;
const WITNESS_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Kind {
    Extract,
    Cover,
    Witness,
    QuasiLocality,
    Outer,
    RoundtripSweep,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SpaceInput {
    Path { path: usize },
    File { file: PathBuf },
    Inline(FiniteMetricSpace),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BuiltinMap {
    Identity,
    Reflection,
    /// `i ↦ ⌊i/2⌋` onto a space of half the size.
    Collapse,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MapInput {
    Builtin { builtin: BuiltinMap },
    Table { table: Vec<usize> },
    /// A serialized map carrying its own source and target.
    File { file: PathBuf },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FiberInput {
    Uniform { uniform: usize },
    Dims { dims: Vec<usize> },
}

impl Default for FiberInput {
    fn default() -> Self {
        FiberInput::Uniform { uniform: 1 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum UnitaryInput {
    /// Binary or JSON operator file; its fiber dimensions override `fibers`.
    File { path: PathBuf },
    Identity,
    CoveringOfMap,
    /// `U_f · V` with `V` a seeded band unitary.
    CoveringTimesBandNoise {
        seed: u64,
        propagation: f64,
        layers: usize,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub kind: Kind,
    /// Source space `X`.
    pub space: SpaceInput,
    /// Target space `Y`; defaults to `X`, or to half of `X` for the collapse map.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_space: Option<SpaceInput>,
    #[serde(default)]
    pub fibers: FiberInput,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub map: Option<MapInput>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub unitary: Option<UnitaryInput>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub radius_grid: Option<Vec<f64>>,
    /// Points `y` for witness runs; all points when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub points: Option<Vec<usize>>,
    /// Seeds for sweeps.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seeds: Option<Vec<u64>>,
    /// Quasi-locality mode; chosen by size when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mode: Option<Mode>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub locality_seed: Option<u64>,
    /// Where to write the constructed covering unitary (cover runs).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub save_unitary: Option<PathBuf>,
}

impl Scenario {
    pub fn new(kind: Kind, space: SpaceInput) -> Self {
        Scenario {
            kind,
            space,
            target_space: None,
            fibers: FiberInput::default(),
            map: None,
            unitary: None,
            delta: None,
            epsilon: None,
            radius_grid: None,
            points: None,
            seeds: None,
            mode: None,
            locality_seed: None,
            save_unitary: None,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

fn check(name: &str, passed: bool, detail: String) -> Check {
    Check {
        name: name.into(),
        passed,
        detail,
    }
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct Timings {
    pub stages: Vec<(String, f64)>,
}

impl Timings {
    fn time<T>(&mut self, stage: &str, f: impl FnOnce() -> T) -> T {
        let start = Instant::now();
        let out = f();
        self.stages.push((stage.into(), start.elapsed().as_secs_f64()));
        out
    }
}

#[derive(Debug, Clone)]
pub struct Outcome {
    pub report: Value,
    pub csv: Option<String>,
    pub timings: Timings,
    pub passed: bool,
}

impl Outcome {
    pub fn report_text(&self) -> String {
        let mut s = serde_json::to_string_pretty(&self.report).expect("report serializes");
        s.push('\n');
        s
    }
}

/// Structured error document for failed runs.
pub fn error_report(e: &Error) -> Value {
    json!({
        "tool": "roelab",
        "version": VERSION,
        "error": { "kind": e.kind(), "message": e.to_string() },
    })
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

fn load_space(input: &SpaceInput, base: &Path) -> Result<Arc<FiniteMetricSpace>> {
    let space = match input {
        SpaceInput::Path { path } => FiniteMetricSpace::path(*path)?,
        SpaceInput::Inline(s) => s.clone(),
        SpaceInput::File { file } => serde_json::from_str(&read_text(&resolve(base, file))?)?,
    };
    Ok(Arc::new(space))
}

struct Setup {
    x: Arc<FiniteMetricSpace>,
    y: Arc<FiniteMetricSpace>,
    map: Option<CoarseMap>,
    source: FiberedSpace,
}

fn fibered(base: Arc<FiniteMetricSpace>, input: &FiberInput) -> Result<FiberedSpace> {
    match input {
        FiberInput::Uniform { uniform } => FiberedSpace::uniform(base, *uniform),
        FiberInput::Dims { dims } => FiberedSpace::new(base, dims.clone()),
    }
}

fn setup(sc: &Scenario, base: &Path) -> Result<Setup> {
    let x = load_space(&sc.space, base)?;
    let mut y = match &sc.target_space {
        Some(t) => Some(load_space(t, base)?),
        None => None,
    };
    let map = match &sc.map {
        None => None,
        Some(MapInput::File { file }) => {
            let m: CoarseMap = serde_json::from_str(&read_text(&resolve(base, file))?)?;
            if m.source().as_ref() != x.as_ref() {
                return Err(Error::InvalidArgument("map file's source differs from the scenario space".into()));
            }
            y.get_or_insert_with(|| m.target().clone());
            Some(m)
        }
        Some(MapInput::Table { table }) => {
            let target = y.get_or_insert_with(|| x.clone()).clone();
            Some(CoarseMap::new(x.clone(), target, table.clone())?)
        }
        Some(MapInput::Builtin { builtin }) => {
            let n = x.len();
            let m = match builtin {
                BuiltinMap::Identity => CoarseMap::identity(x.clone()),
                BuiltinMap::Reflection => {
                    let target = y.get_or_insert_with(|| x.clone()).clone();
                    CoarseMap::from_fn(x.clone(), target, |i| n - 1 - i)?
                }
                BuiltinMap::Collapse => {
                    let target = match &y {
                        Some(t) => t.clone(),
                        None => Arc::new(FiniteMetricSpace::path(n.div_ceil(2))?),
                    };
                    y = Some(target.clone());
                    CoarseMap::from_fn(x.clone(), target, |i| i / 2)?
                }
            };
            Some(m)
        }
    };
    let y = y.unwrap_or_else(|| x.clone());
    if let Some(m) = &map {
        if m.target().as_ref() != y.as_ref() {
            return Err(Error::InvalidArgument("map target differs from the scenario target space".into()));
        }
    }
    let source = fibered(x.clone(), &sc.fibers)?;
    Ok(Setup { x, y, map, source })
}

fn need_map(s: &Setup) -> Result<&CoarseMap> {
    s.map
        .as_ref()
        .ok_or_else(|| Error::InvalidArgument("this scenario needs a map".into()))
}

/// The unitary and, for constructed ones, the covering map's support radius
/// and the noise propagation.
struct Built {
    u: BlockOperator,
    support: Option<f64>,
    noise_propagation: Option<f64>,
}

fn build_unitary(sc: &Scenario, s: &Setup, base: &Path) -> Result<Built> {
    let input = sc
        .unitary
        .as_ref()
        .ok_or_else(|| Error::InvalidArgument("this scenario needs a unitary".into()))?;
    match input {
        UnitaryInput::File { path } => {
            let source_base = (s.x != s.y).then(|| s.x.clone());
            let u = load_operator(&resolve(base, path), s.y.clone(), source_base)?;
            Ok(Built {
                u,
                support: None,
                noise_propagation: None,
            })
        }
        UnitaryInput::Identity => Ok(Built {
            u: BlockOperator::identity(&s.source),
            support: Some(0.0),
            noise_propagation: None,
        }),
        UnitaryInput::CoveringOfMap => {
            let (w, plan) = covering_unitary(need_map(s)?, &s.source, &CoveringOptions::default())?;
            Ok(Built {
                u: w,
                support: Some(plan.support_radius),
                noise_propagation: None,
            })
        }
        UnitaryInput::CoveringTimesBandNoise {
            seed,
            propagation,
            layers,
        } => noisy_cover(need_map(s)?, &s.source, *seed, *propagation, *layers),
    }
}

fn noisy_cover(f: &CoarseMap, source: &FiberedSpace, seed: u64, propagation: f64, layers: usize) -> Result<Built> {
    let (w, plan) = covering_unitary(f, source, &CoveringOptions::default())?;
    let v = random_band_unitary(source, propagation, layers, seed)?;
    let noise = v.propagation(DEFAULT_PROPAGATION_TOL)?;
    Ok(Built {
        u: w.compose(&v)?,
        support: Some(plan.support_radius),
        noise_propagation: Some(noise),
    })
}

fn locality_config(sc: &Scenario) -> LocalityConfig {
    LocalityConfig {
        seed: sc.locality_seed.unwrap_or(0),
        ..LocalityConfig::default()
    }
}

fn grid_or_realized(sc: &Scenario, space: &FiniteMetricSpace) -> Vec<f64> {
    sc.radius_grid.clone().unwrap_or_else(|| space.realized_distances())
}

fn windows_ordered(windows: &[crate::locality::Window]) -> Check {
    let bad: Vec<f64> = windows
        .iter()
        .filter(|w| w.lower > w.upper + WINDOW_SLACK)
        .map(|w| w.radius)
        .collect();
    check("window_lower_le_upper", bad.is_empty(), format!("violating radii {bad:?}"))
}

/// Runs a scenario; relative paths resolve against `base`.
pub fn run(sc: &Scenario, base: &Path) -> Result<Outcome> {
    let mut timings = Timings::default();
    let s = timings.time("setup", || setup(sc, base))?;
    let mut csv = None;
    let (result, checks) = match sc.kind {
        Kind::Extract => {
            let built = timings.time("unitary", || build_unitary(sc, &s, base))?;
            let delta = sc.delta.unwrap_or(DEFAULT_DELTA);
            let rep = timings.time("extract", || extract_pair(&built.u, delta))?;
            let delta_actual = rep
                .witness_norms_g
                .iter()
                .chain(&rep.witness_norms_f)
                .copied()
                .fold(f64::INFINITY, f64::min);
            let mut checks = vec![check("equivalence_verdict", rep.verdict, format!(
                "closeness_fg {}, closeness_gf {}",
                rep.closeness_fg, rep.closeness_gf
            ))];
            let mut result = json!({ "delta_actual": delta_actual, "extraction": rep });
            if let Some(h) = &s.map {
                let c = closeness(&rep.f, h)?;
                result["closeness_f_map"] = json!(c);
                checks.push(check("closeness_to_map_finite", c.is_finite(), format!("{c}")));
            }
            (result, checks)
        }
        Kind::Cover => {
            let f = need_map(&s)?;
            let (w, plan) = timings.time("cover", || covering_unitary(f, &s.source, &CoveringOptions::default()))?;
            let residual = w.unitarity_residual();
            let outside = w
                .blocks()
                .keys()
                .filter(|&&(y, x)| f.target().dist(f.apply(x), y) > plan.support_radius)
                .count();
            let curve = match &sc.radius_grid {
                Some(g) => Some(supported_approximation_curve(&w, f, g)?),
                None => None,
            };
            if let Some(p) = &sc.save_unitary {
                save_operator(&w, &resolve(base, p))?;
            }
            let checks = vec![
                check("unitary", residual <= COVER_UNITARITY_TOL, format!("residual {residual:e}")),
                check("supported_on_map", outside == 0, format!("{outside} blocks outside the support radius")),
            ];
            (json!({ "plan": plan, "unitarity_residual": residual, "curve": curve }), checks)
        }
        Kind::Witness => {
            let built = timings.time("unitary", || build_unitary(sc, &s, base))?;
            let tgt = built.u.target().base().clone();
            let points = sc.points.clone().unwrap_or_else(|| (0..tgt.len()).collect());
            let grid = grid_or_realized(sc, &tgt);
            let pairs: Vec<(usize, f64)> = points.iter().flat_map(|&y| grid.iter().map(move |&r| (y, r))).collect();
            let witnesses = timings.time("witness", || {
                pairs
                    .par_iter()
                    .map(|&(y, r)| concentration_witness_sweep(&built.u, y, r))
                    .collect::<Result<Vec<_>>>()
            })?;
            let worst = witnesses
                .iter()
                .map(|w| w.certificate - w.bound)
                .fold(f64::INFINITY, f64::min);
            let ok = witnesses.iter().all(|w| w.certificate >= w.bound - WITNESS_SLACK);
            (
                json!({ "witnesses": witnesses }),
                vec![check("certificate_ge_bound", ok, format!("min margin {worst}"))],
            )
        }
        Kind::QuasiLocality => {
            let built = timings.time("unitary", || build_unitary(sc, &s, base))?;
            let cfg = locality_config(sc);
            let grid = grid_or_realized(sc, built.u.target().base());
            let reports = timings.time("quasi_locality", || {
                grid.par_iter()
                    .map(|&r| match sc.mode {
                        Some(m) => quasi_locality_violation(&built.u, r, m, &cfg),
                        None => crate::locality::quasi_locality_auto(&built.u, r, &cfg),
                    })
                    .collect::<Result<Vec<_>>>()
            })?;
            let windows = timings.time("windows", || {
                grid.par_iter()
                    .map(|&r| approximability_window(&built.u, r, &cfg))
                    .collect::<Result<Vec<_>>>()
            })?;
            let propagation = built.u.propagation(DEFAULT_PROPAGATION_TOL)?;
            let checks = vec![windows_ordered(&windows)];
            (json!({ "propagation": propagation, "reports": reports, "windows": windows }), checks)
        }
        Kind::Outer => {
            let built = timings.time("unitary", || build_unitary(sc, &s, base))?;
            let delta = sc.delta.unwrap_or(DEFAULT_DELTA);
            let cfg = locality_config(sc);
            let rep = timings.time("outer", || outer_roundtrip(&built.u, delta, sc.radius_grid.as_deref(), &cfg))?;
            let checks = vec![
                check("cover_unitary", rep.residuals.w <= COVER_UNITARITY_TOL, format!("residual {:e}", rep.residuals.w)),
                windows_ordered(&rep.windows),
            ];
            (json!({ "outer": rep }), checks)
        }
        Kind::RoundtripSweep => {
            let (rows, checks) = timings.time("sweep", || sweep(sc, &s))?;
            csv = Some(sweep_csv(&rows));
            (json!({ "rows": rows }), checks)
        }
    };
    let passed = checks.iter().all(|c| c.passed);
    let report = json!({
        "tool": "roelab",
        "version": VERSION,
        "scenario": sc,
        "result": result,
        "checks": checks,
        "passed": passed,
    });
    Ok(Outcome {
        report,
        csv,
        timings,
        passed,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub seed: u64,
    pub ok: bool,
    pub error: Option<String>,
    pub radius: f64,
    pub closeness_f_map: f64,
    pub closeness_fg: f64,
    pub closeness_gf: f64,
    pub verdict: bool,
    pub support_radius: f64,
    pub noise_propagation: f64,
    /// `‖U − M_R(U)‖` bound at `R = support_radius + noise_propagation`.
    pub curve_at_bound: f64,
}

fn sweep_row(f: &CoarseMap, source: &FiberedSpace, seed: u64, delta: f64, propagation: f64, layers: usize) -> SweepRow {
    let attempt = || -> Result<SweepRow> {
        let built = noisy_cover(f, source, seed, propagation, layers)?;
        let (support, noise) = (built.support.unwrap_or(0.0), built.noise_propagation.unwrap_or(0.0));
        let rep = extract_pair(&built.u, delta)?;
        let curve = supported_approximation_curve(&built.u, f, &[support + noise])?;
        Ok(SweepRow {
            seed,
            ok: true,
            error: None,
            radius: rep.radius,
            closeness_f_map: closeness(&rep.f, f)?,
            closeness_fg: rep.closeness_fg,
            closeness_gf: rep.closeness_gf,
            verdict: rep.verdict,
            support_radius: support,
            noise_propagation: noise,
            curve_at_bound: curve[0].1,
        })
    };
    attempt().unwrap_or_else(|e| SweepRow {
        seed,
        ok: false,
        error: Some(e.to_string()),
        radius: f64::NAN,
        closeness_f_map: f64::NAN,
        closeness_fg: f64::NAN,
        closeness_gf: f64::NAN,
        verdict: false,
        support_radius: f64::NAN,
        noise_propagation: f64::NAN,
        curve_at_bound: f64::NAN,
    })
}

/// Median of a nonempty slice (mean of the middle pair for even lengths).
pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn sweep(sc: &Scenario, s: &Setup) -> Result<(Vec<SweepRow>, Vec<Check>)> {
    let f = need_map(s)?;
    let (propagation, layers) = match &sc.unitary {
        Some(UnitaryInput::CoveringTimesBandNoise { propagation, layers, .. }) => (*propagation, *layers),
        None => (2.0, 1),
        Some(_) => {
            return Err(Error::InvalidArgument(
                "sweeps need a covering-times-band-noise unitary (its seed is replaced per row)".into(),
            ))
        }
    };
    let seeds = sc.seeds.clone().unwrap_or_else(|| (0..50).collect());
    if seeds.is_empty() {
        return Err(Error::InvalidArgument("sweep needs at least one seed".into()));
    }
    let delta = sc.delta.unwrap_or(DEFAULT_DELTA);
    let rows: Vec<SweepRow> = seeds
        .par_iter()
        .map(|&seed| sweep_row(f, &s.source, seed, delta, propagation, layers))
        .collect();
    let failed: Vec<u64> = rows.iter().filter(|r| !r.ok).map(|r| r.seed).collect();
    let refuted: Vec<u64> = rows.iter().filter(|r| r.ok && !r.verdict).map(|r| r.seed).collect();
    let mut checks = vec![
        check("extraction_succeeds", failed.is_empty(), format!("failed seeds {failed:?}")),
        check("equivalence_verdict", refuted.is_empty(), format!("seeds without verdict {refuted:?}")),
    ];
    if failed.is_empty() {
        let c: Vec<f64> = rows.iter().map(|r| r.closeness_f_map).collect();
        let (max, med) = (c.iter().copied().fold(0.0, f64::max), median(&c));
        checks.push(check(
            "closeness_uniform",
            c.iter().all(|v| v.is_finite()) && max <= 2.0 * med,
            format!("max {max}, median {med}"),
        ));
        let curve_bad: Vec<u64> = rows.iter().filter(|r| r.curve_at_bound > 1e-9).map(|r| r.seed).collect();
        checks.push(check("curve_vanishes_at_bound", curve_bad.is_empty(), format!("seeds {curve_bad:?}")));
    }
    Ok((rows, checks))
}

fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from(
        "seed,ok,radius,closeness_f_map,closeness_fg,closeness_gf,verdict,support_radius,noise_propagation,curve_at_bound\n",
    );
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{}\n",
            r.seed,
            r.ok,
            r.radius,
            r.closeness_f_map,
            r.closeness_fg,
            r.closeness_gf,
            r.verdict,
            r.support_radius,
            r.noise_propagation,
            r.curve_at_bound
        ));
    }
    out
}

#[cfg(test)]
#[allow(clippy::approx_constant)]
mod tests {
    use super::*;

    fn hadamard_scenario(dir: &Path) -> Scenario {
        let space = FiniteMetricSpace::from_matrix(vec![vec![0.0, 3.0], vec![3.0, 0.0]]).unwrap();
        let r = std::f64::consts::FRAC_1_SQRT_2;
        let text = format!(r#"{{"fiber_dims":[1,1],"blocks":[
            {{"row":0,"col":0,"re":[[{r}]],"im":[[0]]}},{{"row":0,"col":1,"re":[[{r}]],"im":[[0]]}},
            {{"row":1,"col":0,"re":[[{r}]],"im":[[0]]}},{{"row":1,"col":1,"re":[[-{r}]],"im":[[0]]}}]}}"#);
        std::fs::write(dir.join("h.json"), text).unwrap();
        let mut sc = Scenario::new(Kind::Extract, SpaceInput::Inline(space));
        sc.unitary = Some(UnitaryInput::File { path: "h.json".into() });
        sc.delta = Some(0.5);
        sc
    }

    #[test]
    fn hadamard_extract() {
        let dir = std::env::temp_dir().join(format!("roelab-scenario-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let out = run(&hadamard_scenario(&dir), &dir).unwrap();
        assert!(out.passed);
        let d = out.report["result"]["delta_actual"].as_f64().unwrap();
        assert!((d - 0.70711).abs() < 5e-6);
        assert_eq!(out.report["result"]["extraction"]["radius"].as_f64(), Some(0.0));
        let again = run(&hadamard_scenario(&dir), &dir).unwrap();
        assert_eq!(out.report_text(), again.report_text());
    }

    #[test]
    fn scenario_json_roundtrip() {
        let text = r#"{"kind":"roundtrip-sweep","space":{"path":12},"fibers":{"uniform":2},
            "map":{"builtin":"collapse"},
            "unitary":{"type":"covering-times-band-noise","seed":0,"propagation":2,"layers":1},
            "seeds":[0,1,2]}"#;
        let sc = Scenario::from_json(text).unwrap();
        let back = Scenario::from_json(&serde_json::to_string(&sc).unwrap()).unwrap();
        assert_eq!(serde_json::to_value(&sc).unwrap(), serde_json::to_value(&back).unwrap());
        let out = run(&sc, Path::new(".")).unwrap();
        assert!(out.csv.unwrap().lines().count() == 4);
        assert!(Scenario::from_json(r#"{"kind":"extract","space":{"path":3},"bogus":1}"#).is_err());
    }

    #[test]
    fn cover_and_witness_checks_pass() {
        let mut sc = Scenario::new(Kind::Cover, SpaceInput::Path { path: 10 });
        sc.map = Some(MapInput::Builtin { builtin: BuiltinMap::Collapse });
        sc.radius_grid = Some(vec![0.0, 1.0, 2.0]);
        assert!(run(&sc, Path::new(".")).unwrap().passed);

        let mut sc = Scenario::new(Kind::Witness, SpaceInput::Path { path: 8 });
        sc.map = Some(MapInput::Builtin { builtin: BuiltinMap::Reflection });
        sc.fibers = FiberInput::Uniform { uniform: 2 };
        sc.unitary = Some(UnitaryInput::CoveringTimesBandNoise { seed: 3, propagation: 2.0, layers: 2 });
        sc.radius_grid = Some(vec![0.0, 1.0]);
        assert!(run(&sc, Path::new(".")).unwrap().passed);
    }

    #[test]
    fn missing_inputs_are_errors() {
        let sc = Scenario::new(Kind::Cover, SpaceInput::Path { path: 4 });
        assert!(matches!(run(&sc, Path::new(".")), Err(Error::InvalidArgument(_))));
        let sc = Scenario::new(Kind::Extract, SpaceInput::File { file: "/nonexistent/space.json".into() });
        assert!(matches!(run(&sc, Path::new(".")), Err(Error::Io(_))));
    }
}
