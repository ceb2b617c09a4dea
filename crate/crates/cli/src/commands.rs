//! One function per experiment command.

use std::path::{Path, PathBuf};

use rand::Rng;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use skewlab::dynamics::{f_star_fixed_point, lattes_real_fixed_point, resolve, EndoP2, MapRef, RatMap1};
use skewlab::foliation::{
    builtin_form, catalog_certificates, invariance_check, invariance_check_numeric, parse_form, AnyForm, CheckMode,
    NUMERIC_TOL,
};
use skewlab::green::{default_slice_depth, lower_dimension_estimate, sigma_t_box_mass, slice_current, GreenEvaluator};
use skewlab::measure::{
    compare_measures, lyapunov, lyapunov_1d, product_structure_1d, pushforward_pi, sample_chains, sample_chains_1d,
    synthetic_cloud_1d, Battery, Cloud1, Cloud2, DiscDensity, LyapunovReport,
};
use skewlab::normal_form::{
    germ_at, koenigs_1d, normal_form_at, poincare_dulac_2d, semilinearize_completion, skew_semilinear_germ,
    verify_conjugacy, NormalFormData, RESONANCE_TOL, VERIFY_SAMPLES,
};
use skewlab::numeric::{Jet2, JetMap, Line};
use skewlab::periodic::{
    periodic_points_1d, periodic_points_skew, repelling_count_audit, write_records_csv, PeriodicOrbitRecord,
};
use skewlab::poincare::{
    direction_probe, dn_closed_form, sigma_fiber, sigma_fiber_continued, PoincareEvaluator, Policy,
};
use skewlab::{rng, Precision, C64, P1, P2};

use crate::artifact::{summary_json, write_atomic, Check, Header, Plot};
use crate::config::{count, cplx_vec, to_c64, Common, Cplx, RawConfig};
use crate::error::CliError;

/// The default slice depth is the largest with at most this many points.
pub const DEFAULT_SLICE_POINTS: u64 = 256;

pub struct Ctx {
    pub out: PathBuf,
    pub raw: RawConfig,
}

#[derive(Debug)]
pub struct Outcome {
    pub files: Vec<PathBuf>,
    /// Some check failed: exit status 3.
    pub soft: bool,
}

struct Run<P> {
    command: &'static str,
    common: Common,
    params: P,
}

impl<P: DeserializeOwned + Serialize> Run<P> {
    fn new(ctx: &Ctx, command: &'static str, default_map: &str) -> Result<Self, CliError> {
        let (mut common, params): (Common, P) = ctx.raw.resolve(command)?;
        common.map.get_or_insert_with(|| default_map.to_string());
        let precision = if command == "normal-form" { Precision::Extended } else { Precision::Double };
        common.precision.get_or_insert(precision);
        if common.threads > 0 {
            // A second call in the same process keeps the first pool.
            let _ = rayon::ThreadPoolBuilder::new().num_threads(common.threads).build_global();
        }
        Ok(Run { command, common, params })
    }

    fn map(&self) -> Result<MapRef, CliError> {
        Ok(resolve(self.map_name())?)
    }

    fn map_name(&self) -> &str {
        self.common.map.as_deref().unwrap_or_default()
    }

    fn require_double(&self) -> Result<(), CliError> {
        if self.common.precision != Some(Precision::Double) {
            return Err(CliError::Config(format!("precision: '{}' supports only \"double\"", self.command)));
        }
        Ok(())
    }

    fn header(&self) -> Header {
        let mut config = serde_json::to_value(&self.common).expect("config serializes");
        config[self.command] = serde_json::to_value(&self.params).expect("config serializes");
        Header::new(self.command, self.map_name(), self.common.seed, config)
    }

    fn finish(
        &self,
        ctx: &Ctx,
        mut files: Vec<PathBuf>,
        checks: Vec<Check>,
        plots: Vec<Plot>,
        result: Value,
    ) -> Result<Outcome, CliError> {
        let name = format!("{}.json", self.command);
        files.push(write_atomic(&ctx.out, &name, &summary_json(&self.header(), &checks, &plots, result))?);
        Ok(Outcome { files, soft: checks.iter().any(|c| !c.passed) })
    }
}

fn p2_of(v: &[Cplx], field: &str) -> Result<P2, CliError> {
    if v.len() != 3 {
        return Err(CliError::Config(format!("{field}: expected 3 homogeneous coordinates, found {}", v.len())));
    }
    let c = to_c64(v);
    P2::new([c[0], c[1], c[2]]).map_err(|e| CliError::Config(format!("{field}: {e}")))
}

fn p1_of(v: &[Cplx], field: &str) -> Result<P1, CliError> {
    let c = to_c64(v);
    match c.len() {
        1 => Ok(P1::from_affine(c[0])),
        2 => P1::new([c[0], c[1]]).map_err(|e| CliError::Config(format!("{field}: {e}"))),
        n => Err(CliError::Config(format!("{field}: expected 1 or 2 coordinates, found {n}"))),
    }
}

fn default_start_p2() -> Vec<Cplx> {
    cplx_vec(&[C64::new(0.3, 0.1), C64::new(1.0, 0.0), C64::new(0.7, -0.2)])
}

fn default_start_p1() -> Vec<Cplx> {
    cplx_vec(&[C64::new(0.2, 0.7), C64::new(1.0, 0.0)])
}

fn default_start(m: &MapRef) -> Vec<Cplx> {
    match m {
        MapRef::P1(_) => default_start_p1(),
        MapRef::P2(_) => default_start_p2(),
    }
}

/// Deterministic choice among repelling records: the most nearly real one.
fn pick_record(recs: &[PeriodicOrbitRecord]) -> Option<&PeriodicOrbitRecord> {
    let key = |r: &PeriodicOrbitRecord| r.point.iter().map(|c| c.im.abs()).sum::<f64>();
    recs.iter()
        .filter(|r| r.flags.repelling && r.flags.on_e_theta != Some(true))
        .filter(|r| r.point.iter().all(|c| c.norm().is_finite()))
        .min_by(|a, b| {
            key(a).total_cmp(&key(b)).then_with(|| {
                let ra: Vec<f64> = a.point.iter().map(|c| c.re).collect();
                let rb: Vec<f64> = b.point.iter().map(|c| c.re).collect();
                rb.partial_cmp(&ra).unwrap_or(std::cmp::Ordering::Equal)
            })
        })
}

/// Default repelling periodic point used as the base of local constructions.
fn default_base_point(f: &EndoP2, period: usize) -> Result<P2, CliError> {
    if period == 1 && (f.name == "f_star" || f.name == "f_star_perturbed") {
        return Ok(f_star_fixed_point());
    }
    if !f.is_skew() {
        return Err(CliError::Config(format!("point is required for the non-skew map '{}'", f.name)));
    }
    let recs = periodic_points_skew(f, period)?;
    let r =
        pick_record(&recs).ok_or_else(|| CliError::Config("no repelling periodic point found; give point".into()))?;
    Ok(r.p2()?)
}

fn default_base_point_1d(theta: &RatMap1, period: usize) -> Result<P1, CliError> {
    if period == 1 && theta.name == "lattes4" {
        return Ok(P1::from_affine(C64::new(lattes_real_fixed_point(), 0.0)));
    }
    let recs = periodic_points_1d(theta, period)?;
    let finite: Vec<PeriodicOrbitRecord> =
        recs.into_iter().filter(|r| r.p1().ok().and_then(|p| p.affine()).is_some_and(|a| a.norm() < 1e6)).collect();
    let r = pick_record(&finite)
        .ok_or_else(|| CliError::Config("no finite repelling periodic point found; give point".into()))?;
    Ok(r.p1()?)
}

fn random_bidisc<R: Rng>(r: &mut R, radius: f64) -> [C64; 2] {
    let mut one = || C64::from_polar(radius * r.random::<f64>().sqrt(), r.random::<f64>() * std::f64::consts::TAU);
    [one(), one()]
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    if v.is_empty() {
        f64::NAN
    } else {
        v[v.len() / 2]
    }
}

fn csv_bytes<I: IntoIterator<Item = Vec<f64>>>(header: &Value, columns: &[&str], rows: I) -> Result<Vec<u8>, CliError> {
    let mut buf = Vec::new();
    let cols: Vec<String> = columns.iter().map(|s| s.to_string()).collect();
    skewlab::io::write_csv(&mut buf, header, &cols, rows)?;
    Ok(buf)
}

// green

#[derive(Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct GreenParams {
    point: Vec<Cplx>,
    tol: f64,
}

impl Default for GreenParams {
    fn default() -> Self {
        GreenParams { point: cplx_vec(&[C64::new(1.0, 0.0); 3]), tol: 1e-10 }
    }
}

pub fn green(ctx: &Ctx) -> Result<Outcome, CliError> {
    let run: Run<GreenParams> = Run::new(ctx, "green", "f_star")?;
    run.require_double()?;
    let m = run.map()?;
    let f = m.as_p2()?;
    let p = &run.params;
    if p.point.len() != 3 {
        return Err(CliError::Config(format!("green.point: expected 3 coordinates, found {}", p.point.len())));
    }
    let z = to_c64(&p.point);
    let z = [z[0], z[1], z[2]];
    let g = GreenEvaluator::new(f.clone());
    let v = g.green_value(&z, p.tol)?;
    let image = g.green_value(&f.eval_lift(&z), p.tol)?;
    let d = f.degree() as f64;
    let fe = (image.value - d * v.value).abs() / d;
    let mut checks = vec![
        Check::flag("converged", v.converged, None),
        Check::below("functional_equation_residual", fe, 2.0 * p.tol, Some(11)),
    ];
    let mut closed = Value::Null;
    if f.name.starts_with("monomial") {
        let expect = z.iter().map(|c| c.norm()).fold(0.0, f64::max).ln();
        checks.push(Check::below(
            "monomial_closed_form_error",
            (v.value - expect).abs(),
            1e-10f64.max(p.tol),
            Some(11),
        ));
        closed = json!(expect);
    }
    let result = json!({
        "value": v.value,
        "error": v.error,
        "depth": v.depth,
        "converged": v.converged,
        "functional_equation_residual": fe,
        "closed_form": closed,
        "certified_error_by_depth": (0..=8).map(|n| g.certified_error(n)).collect::<Vec<_>>(),
    });
    run.finish(ctx, vec![], checks, vec![], result)
}

// slice

#[derive(Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
struct SliceParams {
    depth: Option<usize>,
    line: Option<Vec<Cplx>>,
    reference: Option<Vec<Cplx>>,
    box_center: Option<Vec<Cplx>>,
    box_radius: Option<f64>,
    #[serde(deserialize_with = "count")]
    n_lines: usize,
    box_depth: Option<usize>,
}

fn line_of(v: &[Cplx], field: &str) -> Result<Line, CliError> {
    let c = to_c64(v);
    if c.len() != 3 {
        return Err(CliError::Config(format!("{field}: expected 3 dual coordinates, found {}", c.len())));
    }
    Line::new([c[0], c[1], c[2]]).map_err(|e| CliError::Config(format!("{field}: {e}")))
}

pub fn slice(ctx: &Ctx) -> Result<Outcome, CliError> {
    let mut run: Run<SliceParams> = Run::new(ctx, "slice", "f_star")?;
    run.require_double()?;
    let m = run.map()?;
    let f = m.as_p2()?;
    let seed = run.common.seed;
    let p = &mut run.params;
    if p.n_lines == 0 {
        p.n_lines = 64;
    }
    let depth = *p.depth.get_or_insert(default_slice_depth(f.degree(), DEFAULT_SLICE_POINTS));
    let mut r = rng::substream(seed, 0);
    let l = match &p.line {
        Some(v) => line_of(v, "slice.line")?,
        None => Line::random(&mut r),
    };
    let lm = match &p.reference {
        Some(v) => line_of(v, "slice.reference")?,
        None => Line::random(&mut r),
    };
    p.line = Some(cplx_vec(&l.dual));
    p.reference = Some(cplx_vec(&lm.dual));
    let s = slice_current(f, &l, &lm, depth)?;
    let mut checks = vec![Check::below("mass_defect", (s.mass() - 1.0).abs(), 1e-12, None)];
    let mut box_mass = Value::Null;
    if let Some(radius) = p.box_radius {
        let center = match &p.box_center {
            Some(v) => p2_of(v, "slice.box_center")?,
            None => {
                let c = f_star_fixed_point();
                p.box_center = Some(cplx_vec(c.coords()));
                c
            }
        };
        let bd = *p.box_depth.get_or_insert(3);
        let b = sigma_t_box_mass(f, &center, radius, p.n_lines, bd, seed)?;
        checks.push(Check::below("box_mass_in_unit_interval", (b.estimate - 0.5).abs(), 0.5 + 3.0 * b.stderr, None));
        box_mass = serde_json::to_value(&b).expect("serializes");
    }
    let header = run.header().to_value();
    let rows = s.points.iter().zip(&s.weights).map(|(q, w)| {
        let mut row: Vec<f64> = q.coords().iter().flat_map(|c| [c.re, c.im]).collect();
        row.push(*w);
        row
    });
    let cols = ["coord0_re", "coord0_im", "coord1_re", "coord1_im", "coord2_re", "coord2_im", "weight"];
    let csv = write_atomic(&ctx.out, "slice.csv", &csv_bytes(&header, &cols, rows)?)?;
    let result = json!({
        "depth": depth,
        "points": s.points.len(),
        "mass": s.mass(),
        "converged": s.converged,
        "box_mass": box_mass,
    });
    run.finish(ctx, vec![csv], checks, vec![], result)
}

// sample

#[derive(Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct SampleParams {
    start: Option<Vec<Cplx>>,
    #[serde(deserialize_with = "count")]
    burn_in: usize,
    #[serde(deserialize_with = "count")]
    n_per: usize,
    #[serde(deserialize_with = "count")]
    chains: usize,
    pushforward: bool,
    dimension_radii: Vec<f64>,
}

impl Default for SampleParams {
    fn default() -> Self {
        SampleParams {
            start: None,
            burn_in: 50,
            n_per: 2500,
            chains: 4,
            pushforward: false,
            dimension_radii: vec![0.08, 0.04, 0.02, 0.01, 0.005, 0.0025],
        }
    }
}

fn cloud_header(header: &Header, provenance: &skewlab::measure::Provenance) -> Value {
    let mut v = header.to_value();
    v["provenance"] = serde_json::to_value(provenance).expect("serializes");
    v
}

pub fn sample(ctx: &Ctx) -> Result<Outcome, CliError> {
    let mut run: Run<SampleParams> = Run::new(ctx, "sample", "f_star")?;
    run.require_double()?;
    let m = run.map()?;
    let seed = run.common.seed;
    let start = run.params.start.get_or_insert_with(|| default_start(&m)).clone();
    let p = &run.params;
    let mut files = Vec::new();
    let mut checks = Vec::new();
    let mut plots = Vec::new();
    let result;
    match &m {
        MapRef::P1(theta) => {
            let cloud = sample_chains_1d(theta, &p1_of(&start, "sample.start")?, p.burn_in, p.n_per, p.chains, seed)?;
            let mut buf = Vec::new();
            cloud.write_csv(&mut buf, &cloud_header(&run.header(), &cloud.provenance))?;
            files.push(write_atomic(&ctx.out, "cloud.csv", &buf)?);
            let dim = lower_dimension_estimate(&cloud, &p.dimension_radii)?;
            if theta.name == "power2" {
                let off = cloud
                    .points()
                    .iter()
                    .filter_map(|q| q.affine())
                    .map(|a| (a.norm() - 1.0).abs())
                    .fold(0.0, f64::max);
                checks.push(Check::below("unit_circle_deviation", off, 1e-6, Some(13)));
                checks.push(Check::below("dimension_error", (dim.slope - 1.0).abs(), 0.15, Some(13)));
            }
            plots.push(Plot {
                figure: "dimension".into(),
                x_label: "log_r".into(),
                y_label: "mean_log_mass".into(),
                series: theta.name.clone(),
                points: dim.radii.iter().zip(&dim.mean_log_mass).map(|(r, y)| [r.ln(), *y]).collect(),
            });
            result = json!({"n": cloud.len(), "dimension": dim});
        }
        MapRef::P2(f) => {
            let cloud = sample_chains(f, &p2_of(&start, "sample.start")?, p.burn_in, p.n_per, p.chains, seed)?;
            let mut buf = Vec::new();
            cloud.write_csv(&mut buf, &cloud_header(&run.header(), &cloud.provenance))?;
            files.push(write_atomic(&ctx.out, "cloud.csv", &buf)?);
            let mut excluded = Value::Null;
            if p.pushforward {
                let (pc, ex) = pushforward_pi(&cloud)?;
                let mut buf = Vec::new();
                pc.write_csv(&mut buf, &cloud_header(&run.header(), &pc.provenance))?;
                files.push(write_atomic(&ctx.out, "base_cloud.csv", &buf)?);
                excluded = json!(ex);
            }
            result = json!({"n": cloud.len(), "pushforward_excluded_mass": excluded});
        }
    }
    run.finish(ctx, files, checks, plots, result)
}

// compare

#[derive(Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct CompareParams {
    cloud1: String,
    cloud2: String,
    /// Push `cloud1` forward by the pencil projection first.
    project1: bool,
    threshold: f64,
}

impl Default for CompareParams {
    fn default() -> Self {
        CompareParams { cloud1: String::new(), cloud2: String::new(), project1: false, threshold: 4.0 }
    }
}

enum AnyCloud {
    P1(Cloud1),
    P2(Cloud2),
}

fn load_cloud(path: &str, field: &str) -> Result<AnyCloud, CliError> {
    if path.is_empty() {
        return Err(CliError::Config(format!("{field}: a cloud CSV path is required")));
    }
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{path}: {e}")))?;
    if let Ok((_, c)) = Cloud2::read_csv(&text) {
        return Ok(AnyCloud::P2(c));
    }
    Ok(AnyCloud::P1(Cloud1::read_csv(&text)?.1))
}

pub fn compare(ctx: &Ctx) -> Result<Outcome, CliError> {
    let run: Run<CompareParams> = Run::new(ctx, "compare", "f_star")?;
    run.require_double()?;
    let p = &run.params;
    let mut c1 = load_cloud(&p.cloud1, "compare.cloud1")?;
    let c2 = load_cloud(&p.cloud2, "compare.cloud2")?;
    let mut excluded = 0.0;
    if p.project1 {
        let AnyCloud::P2(c) = &c1 else {
            return Err(CliError::Config("compare.project1: cloud1 must live on the projective plane".into()));
        };
        let (pc, ex) = pushforward_pi(c)?;
        excluded = ex;
        c1 = AnyCloud::P1(pc);
    }
    let report = match (&c1, &c2) {
        (AnyCloud::P1(a), AnyCloud::P1(b)) => compare_measures(a, b, &Battery::v1(2))?,
        (AnyCloud::P2(a), AnyCloud::P2(b)) => compare_measures(a, b, &Battery::v1(3))?,
        _ => return Err(CliError::Config("compare: clouds live on projective spaces of different dimension".into())),
    };
    let criterion = p.project1.then_some(4);
    let checks = vec![Check::below("max_abs_z", report.max_abs_z, p.threshold, criterion)];
    let result = json!({"report": report, "pushforward_excluded_mass": excluded});
    run.finish(ctx, vec![], checks, vec![], result)
}

// lyapunov

#[derive(Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct LyapunovParams {
    start: Option<Vec<Cplx>>,
    #[serde(deserialize_with = "count")]
    n_steps: usize,
    forward: bool,
}

impl Default for LyapunovParams {
    fn default() -> Self {
        LyapunovParams { start: None, n_steps: 100_000, forward: false }
    }
}

pub fn lyapunov_cmd(ctx: &Ctx) -> Result<Outcome, CliError> {
    let mut run: Run<LyapunovParams> = Run::new(ctx, "lyapunov", "f_star")?;
    run.require_double()?;
    let m = run.map()?;
    let seed = run.common.seed;
    let start = run.params.start.get_or_insert_with(|| default_start(&m)).clone();
    let p = &run.params;
    let (rep, d): (LyapunovReport, f64) = match &m {
        MapRef::P1(theta) => {
            (lyapunov_1d(theta, &p1_of(&start, "lyapunov.start")?, p.n_steps, seed)?, theta.degree() as f64)
        }
        MapRef::P2(f) => {
            let s = p2_of(&start, "lyapunov.start")?;
            let r = if p.forward {
                skewlab::measure::lyapunov::lyapunov_forward(f, &s, p.n_steps, seed)?
            } else {
                lyapunov(f, &s, p.n_steps, seed)?
            };
            (r, f.degree() as f64)
        }
    };
    let mut checks = Vec::new();
    if let MapRef::P2(f) = &m {
        let k = rep.exponents.len() - 1;
        let bd = rep.exponents[k] - (0.5 * d.ln() - 3.0 * rep.half_width[k]);
        let criterion = matches!(f.name.as_str(), "f_star" | "monomial2").then_some(3);
        checks.push(Check::at_least("smallest_exponent_minus_lower_bound", bd, 0.0, criterion));
        if f.name == "f_star" {
            let rel = (rep.exponents[k] - 2f64.ln()).abs() / 2f64.ln();
            checks.push(Check::below("smallest_exponent_relative_error_vs_log2", rel, 0.03, Some(3)));
        }
    }
    let header = run.header().to_value();
    let rows = rep.exponents.iter().zip(&rep.half_width).enumerate().map(|(i, (l, h))| vec![i as f64, *l, *h]);
    let csv = write_atomic(&ctx.out, "lyapunov.csv", &csv_bytes(&header, &["index", "exponent", "half_width"], rows)?)?;
    let plots = vec![Plot {
        figure: "lyapunov".into(),
        x_label: "index".into(),
        y_label: "exponent".into(),
        series: run.map_name().to_string(),
        points: rep.exponents.iter().enumerate().map(|(i, l)| [i as f64, *l]).collect(),
    }];
    let result = serde_json::to_value(&rep).expect("serializes");
    run.finish(ctx, vec![csv], checks, plots, result)
}

// periodic

#[derive(Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct PeriodicParams {
    #[serde(deserialize_with = "count")]
    period: usize,
}

impl Default for PeriodicParams {
    fn default() -> Self {
        PeriodicParams { period: 1 }
    }
}

pub fn periodic(ctx: &Ctx) -> Result<Outcome, CliError> {
    let run: Run<PeriodicParams> = Run::new(ctx, "periodic", "f_star")?;
    run.require_double()?;
    let m = run.map()?;
    let n = run.params.period;
    let mut checks = Vec::new();
    let recs = match &m {
        MapRef::P1(theta) => {
            let recs = periodic_points_1d(theta, n)?;
            if theta.name == "lattes4" {
                let target = 2f64.powi(n as i32);
                let worst = recs
                    .iter()
                    .filter(|r| {
                        r.p1().ok().and_then(|p| p.affine()).is_some_and(|a| a.norm() < 1e6) && r.flags.repelling
                    })
                    .map(|r| (r.chi1.norm() - target).abs())
                    .fold(0.0, f64::max);
                checks.push(Check::below("finite_multiplier_modulus_error", worst, 1e-8, (n == 1).then_some(1)));
            }
            recs
        }
        MapRef::P2(f) => {
            let recs = periodic_points_skew(f, n)?;
            if f.name == "f_star" {
                let target = 2f64.powi(n as i32);
                let worst = recs
                    .iter()
                    .filter(|r| r.flags.repelling && r.flags.on_e_theta == Some(false))
                    .filter_map(|r| r.chi2)
                    .map(|c| (c.norm() - target).abs())
                    .fold(0.0, f64::max);
                checks.push(Check::below("chi2_modulus_error", worst, 1e-6, (n == 1).then_some(2)));
            }
            recs
        }
    };
    let header = run.header().to_value();
    let mut buf = Vec::new();
    write_records_csv(&mut buf, &header, &recs)?;
    let csv = write_atomic(&ctx.out, "periodic.csv", &buf)?;
    let result = json!({
        "records": recs.len(),
        "repelling": recs.iter().filter(|r| r.flags.repelling).count(),
        "total_multiplicity": recs.iter().map(|r| r.multiplicity).sum::<usize>(),
    });
    run.finish(ctx, vec![csv], checks, vec![], result)
}

// audit

#[derive(Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct AuditParams {
    periods: Vec<usize>,
    center: Option<Vec<Cplx>>,
    radius: f64,
    eps: f64,
    start: Option<Vec<Cplx>>,
    #[serde(deserialize_with = "count")]
    burn_in: usize,
    #[serde(deserialize_with = "count")]
    n_per: usize,
    #[serde(deserialize_with = "count")]
    chains: usize,
    #[serde(deserialize_with = "count")]
    lyapunov_steps: usize,
    min_ratio: f64,
}

impl Default for AuditParams {
    fn default() -> Self {
        AuditParams {
            periods: vec![1, 2],
            center: None,
            radius: 0.5,
            eps: 0.05,
            start: None,
            burn_in: 50,
            n_per: 2500,
            chains: 4,
            lyapunov_steps: 20_000,
            min_ratio: 0.5,
        }
    }
}

pub fn audit(ctx: &Ctx) -> Result<Outcome, CliError> {
    let mut run: Run<AuditParams> = Run::new(ctx, "audit", "f_star")?;
    run.require_double()?;
    let m = run.map()?;
    let f = m.as_p2()?;
    let seed = run.common.seed;
    let p = &mut run.params;
    let start = p2_of(p.start.get_or_insert_with(default_start_p2), "audit.start")?;
    let center = match &p.center {
        Some(v) => p2_of(v, "audit.center")?,
        None => {
            let c = default_base_point(f, 1)?;
            p.center = Some(cplx_vec(c.coords()));
            c
        }
    };
    let cloud = sample_chains(f, &start, p.burn_in, p.n_per, p.chains, rng::substream_seed(seed, 0))?;
    let lyap = lyapunov(f, &start, p.lyapunov_steps, rng::substream_seed(seed, 1))?;
    let mut reports = Vec::new();
    let mut checks = Vec::new();
    let mut pts = Vec::new();
    for &n in &p.periods {
        let a = repelling_count_audit(f, n, &center, p.radius, &cloud, p.eps, &lyap)?;
        let ratio = a.ratio.unwrap_or(f64::NAN);
        let criterion = (f.name == "f_star").then_some(12);
        checks.push(Check::at_least(&format!("ratio_period_{n}"), ratio, p.min_ratio, criterion));
        pts.push([n as f64, ratio]);
        reports.push(a);
    }
    let plots = vec![Plot {
        figure: "audit".into(),
        x_label: "period".into(),
        y_label: "ratio".into(),
        series: run.map_name().to_string(),
        points: pts,
    }];
    run.finish(ctx, vec![], checks, plots, json!({"audits": reports, "lyapunov": lyap}))
}

// normal-form

#[derive(Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct NormalFormParams {
    point: Option<Vec<Cplx>>,
    #[serde(deserialize_with = "count")]
    period: usize,
    #[serde(deserialize_with = "count")]
    order: usize,
    chart: Option<usize>,
    radii: Vec<f64>,
    #[serde(deserialize_with = "count")]
    samples: usize,
}

impl Default for NormalFormParams {
    fn default() -> Self {
        NormalFormParams {
            point: None,
            period: 1,
            order: 12,
            chart: None,
            radii: vec![1e-1, 3e-2, 1e-2, 3e-3],
            samples: VERIFY_SAMPLES,
        }
    }
}

/// `Dⁿ` from the closed form against `n`-fold jet composition, relative sup error.
fn closed_form_error(nf: &skewlab::normal_form::NormalForm, n: usize) -> Result<f64, CliError> {
    let m = nf.order;
    let d = nf.d_jet();
    let mut acc = JetMap::identity(m);
    for _ in 0..n {
        acc = d.compose(&acc)?;
    }
    let fwd = dn_closed_form(nf, n, false)?.to_jet(m);
    let inv = dn_closed_form(nf, n, true)?;
    let id = inv.compose(&dn_closed_form(nf, n, false)?).to_jet(m);
    let scale = 1.0 + acc.max_abs_from(0);
    let e1 = fwd.sub(&acc).max_abs_from(0) / scale;
    let e2 = id.sub(&JetMap::identity(m)).max_abs_from(0);
    Ok(e1.max(e2))
}

pub fn normal_form(ctx: &Ctx) -> Result<Outcome, CliError> {
    let mut run: Run<NormalFormParams> = Run::new(ctx, "normal-form", "f_star")?;
    let m = run.map()?;
    let seed = run.common.seed;
    let precision = run.common.precision.unwrap_or_default();
    let p = &mut run.params;
    let mut checks = Vec::new();
    let mut plots = Vec::new();
    let result = match &m {
        MapRef::P1(theta) => {
            let a0 = match &p.point {
                Some(v) => p1_of(v, "normal-form.point")?,
                None => default_base_point_1d(theta, p.period)?,
            };
            p.point = Some(cplx_vec(a0.coords()));
            if p.period != 1 {
                return Err(CliError::Config("normal-form.period: maps of the line support period 1".into()));
            }
            let k = koenigs_1d(theta, &a0, p.order)?;
            json!({
                "a0": [k.a0.re, k.a0.im],
                "multiplier": [k.lambda.re, k.lambda.im],
                "w": k.w.c.iter().map(|c| [c.re, c.im]).collect::<Vec<_>>(),
                "w_inv": k.w_inv.c.iter().map(|c| [c.re, c.im]).collect::<Vec<_>>(),
                "convergence_radius": k.convergence_radius(),
            })
        }
        MapRef::P2(f) => {
            let pt = match &p.point {
                Some(v) => p2_of(v, "normal-form.point")?,
                None => default_base_point(f, p.period)?,
            };
            p.point = Some(cplx_vec(pt.coords()));
            let (data, nf64, conj): (NormalFormData, _, _) = match precision {
                Precision::Extended => {
                    let pn = normal_form_at(f, &pt, p.period, p.order, p.chart)?;
                    let conj = verify_conjugacy(|u| pn.germ.eval_map(f, u), &pn.nf, &p.radii, p.samples, seed)?;
                    (pn.data()?, pn.nf.to_c64(), conj)
                }
                Precision::Double => {
                    let germ = germ_at::<C64>(f, &pt, p.period, p.order, p.chart)?;
                    let nf = poincare_dulac_2d(&germ.jet, p.order, RESONANCE_TOL)?;
                    let conj = verify_conjugacy(|u| germ.eval_map(f, u), &nf, &p.radii, p.samples, seed)?;
                    let base = germ.point()?;
                    (NormalFormData::new(&nf, Some((&base, germ.chart(), germ.period))), nf, conj)
                }
            };
            let homological_tol = if precision == Precision::Extended { 1e-20 } else { 1e-10 };
            let is_reference = f.name == "f_star" && p.period == 1 && p.order == 12;
            let c6 = is_reference.then_some(6);
            checks.push(Check::below("homological_residual", data.homological_residual, homological_tol, c6));
            checks.push(Check::at_least("conjugacy_slope", conj.slope, p.order as f64 + 0.5, c6));
            if f.is_skew() && p.period == 1 {
                let (g, _) = skew_semilinear_germ(f, &pt, p.order)?;
                let s = semilinearize_completion(&g, p.order, RESONANCE_TOL)?;
                let linear = s.xi.f[1] == Jet2::var(p.order, 1);
                checks.push(Check::flag("semilinear_second_component_is_w", linear, c6));
            }
            if nf64.c.norm() == 0.0 || nf64.q.is_some() {
                let e = closed_form_error(&nf64, 8)?;
                checks.push(Check::below("closed_form_iterate_error", e, 1e-10, is_reference.then_some(7)));
            }
            plots.push(Plot {
                figure: "conjugacy".into(),
                x_label: "log10_radius".into(),
                y_label: "log10_residual".into(),
                series: run.common.map.clone().unwrap_or_default(),
                points: conj
                    .radii
                    .iter()
                    .zip(&conj.residuals)
                    .map(|(r, e)| [r.log10(), e.max(1e-300).log10()])
                    .collect(),
            });
            json!({"normal_form": data, "conjugacy": conj})
        }
    };
    run.finish(ctx, vec![], checks, plots, result)
}

// sigma

#[derive(Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct SigmaParams {
    base: Option<Vec<Cplx>>,
    #[serde(deserialize_with = "count")]
    period: usize,
    points: Option<Vec<Vec<Cplx>>>,
    #[serde(deserialize_with = "count")]
    n_points: usize,
    radius: f64,
    policy: Policy,
}

impl Default for SigmaParams {
    fn default() -> Self {
        SigmaParams { base: None, period: 1, points: None, n_points: 100, radius: 5.0, policy: Policy::default() }
    }
}

fn evaluator(
    f: &EndoP2,
    base: &mut Option<Vec<Cplx>>,
    period: usize,
    policy: &Policy,
    field: &str,
) -> Result<PoincareEvaluator, CliError> {
    let a = match base {
        Some(v) => p2_of(v, field)?,
        None => default_base_point(f, period)?,
    };
    *base = Some(cplx_vec(a.coords()));
    Ok(PoincareEvaluator::new(f, &a, period, policy.clone())?)
}

pub fn sigma(ctx: &Ctx) -> Result<Outcome, CliError> {
    let mut run: Run<SigmaParams> = Run::new(ctx, "sigma", "f_star")?;
    run.require_double()?;
    let m = run.map()?;
    let f = m.as_p2()?;
    let seed = run.common.seed;
    let p = &mut run.params;
    let ev = evaluator(f, &mut p.base, p.period, &p.policy, "sigma.base")?;
    let xs: Vec<[C64; 2]> = match &p.points {
        Some(v) => v
            .iter()
            .map(|x| match x.as_slice() {
                [a, b] => Ok([a.0, b.0]),
                _ => Err(CliError::Config("sigma.points: each point needs 2 coordinates".into())),
            })
            .collect::<Result<_, _>>()?,
        None => {
            let mut r = rng::seeded(seed);
            (0..p.n_points).map(|_| random_bidisc(&mut r, p.radius)).collect()
        }
    };
    let mut rows = Vec::new();
    let mut worst = 0.0f64;
    let mut unstable = 0usize;
    for x in &xs {
        let s = ev.eval_sigma(*x)?;
        let res = ev.semiconjugacy_residual(*x)?;
        let stab = s.stability.unwrap_or(f64::NAN);
        worst = worst.max(res);
        if !(stab < s.error) {
            unstable += 1;
        }
        let mut row = vec![x[0].re, x[0].im, x[1].re, x[1].im];
        row.extend(s.point.coords().iter().flat_map(|c| [c.re, c.im]));
        row.extend([s.error, s.depth as f64, stab, res]);
        rows.push(row);
    }
    let c8 = (f.name == "f_star").then_some(8);
    let checks = vec![
        Check::below("max_semiconjugacy_residual", worst, 1e-8, c8),
        Check::below("depth_unstable_points", unstable as f64, 0.5, c8),
    ];
    let header = run.header().to_value();
    let cols = [
        "x0_re",
        "x0_im",
        "x1_re",
        "x1_im",
        "coord0_re",
        "coord0_im",
        "coord1_re",
        "coord1_im",
        "coord2_re",
        "coord2_im",
        "error",
        "depth",
        "stability",
        "residual",
    ];
    let csv = write_atomic(&ctx.out, "sigma.csv", &csv_bytes(&header, &cols, rows)?)?;
    let result = json!({
        "points": xs.len(),
        "max_residual": worst,
        "depth_unstable": unstable,
        "eps": ev.eps,
        "normal_form": ev.data,
    });
    run.finish(ctx, vec![csv], checks, vec![], result)
}

// probe

#[derive(Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct ProbeParams {
    base: Option<Vec<Cplx>>,
    #[serde(deserialize_with = "count")]
    period: usize,
    #[serde(deserialize_with = "count")]
    n_probes: usize,
    #[serde(deserialize_with = "count")]
    max_tries: usize,
    radius: f64,
    /// Skew map whose fibers are continued when the probed map is not skew.
    reference: Option<String>,
    #[serde(deserialize_with = "count")]
    extra_depth: usize,
    #[serde(deserialize_with = "count")]
    min_depth: usize,
    threshold: f64,
    policy: Policy,
}

impl Default for ProbeParams {
    fn default() -> Self {
        ProbeParams {
            base: None,
            period: 1,
            n_probes: 50,
            max_tries: 400,
            radius: 0.1,
            reference: None,
            extra_depth: 2,
            min_depth: 5,
            threshold: 1e-6,
            policy: Policy::default(),
        }
    }
}

pub fn probe(ctx: &Ctx) -> Result<Outcome, CliError> {
    let mut run: Run<ProbeParams> = Run::new(ctx, "probe", "f_star")?;
    run.require_double()?;
    let m = run.map()?;
    let f = m.as_p2()?;
    let seed = run.common.seed;
    let p = &mut run.params;
    let reference = if f.is_skew() {
        None
    } else {
        let name = p.reference.get_or_insert_with(|| "f_star".into()).clone();
        Some(resolve(&name)?.as_p2()?.clone())
    };
    if reference.as_ref().is_some_and(|r| !r.is_skew()) {
        return Err(CliError::Config("probe.reference: must be a skew product".into()));
    }
    let ev = evaluator(f, &mut p.base, p.period, &p.policy, "probe.base")?;
    let mut r = rng::seeded(seed);
    let mut probes = Vec::new();
    let mut tries = 0;
    while probes.len() < p.n_probes && tries < p.max_tries {
        tries += 1;
        let x = random_bidisc(&mut r, p.radius);
        let Ok(s) = ev.eval_sigma_raw(x) else { continue };
        let depth = (s.depth + p.extra_depth).max(p.min_depth);
        let fib = match &reference {
            None => sigma_fiber(&ev, &s.point, depth),
            Some(g) => sigma_fiber_continued(&ev, g, &s.point, depth),
        };
        let Ok(fib) = fib else { continue };
        if fib.elements.len() < 2 {
            continue;
        }
        let Ok(pr) = direction_probe(&ev, &s.point, &fib) else { continue };
        if pr.directions.len() >= 2 {
            probes.push(pr);
        }
    }
    let coh: Vec<f64> = probes.iter().map(|q| q.coherence).collect();
    let worst = coh.iter().cloned().fold(0.0, f64::max);
    let kernel = probes.iter().flat_map(|q| q.kernel_residuals.iter().cloned()).fold(0.0, f64::max);
    let c9 = (f.name == "f_star").then_some(9);
    let checks = vec![
        Check::at_least("probed_points", probes.len() as f64, p.n_probes as f64, c9),
        Check::below("max_coherence", worst, p.threshold, c9),
        Check::below("max_pencil_kernel_residual", kernel, p.threshold, c9),
    ];
    let result = json!({
        "tries": tries,
        "median_coherence": median(coh),
        "max_coherence": worst,
        "max_kernel_residual": kernel,
        "probes": probes,
    });
    run.finish(ctx, vec![], checks, vec![], result)
}

// foliation

#[derive(Clone, Copy, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "lowercase")]
enum Mode {
    Exact,
    Numeric,
}

#[derive(Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct FoliationParams {
    form: String,
    mode: Mode,
    tol: f64,
    /// Also certify every shipped catalog pair.
    catalog: bool,
}

impl Default for FoliationParams {
    fn default() -> Self {
        FoliationParams { form: "pencil_001".into(), mode: Mode::Exact, tol: NUMERIC_TOL, catalog: false }
    }
}

fn load_form(reference: &str) -> Result<AnyForm, CliError> {
    match builtin_form(reference) {
        Ok(w) => Ok(AnyForm::Exact(w)),
        Err(_) if Path::new(reference).exists() => {
            let text = std::fs::read_to_string(reference)?;
            Ok(parse_form(&text)?.1)
        }
        Err(e) => Err(CliError::Config(format!("foliation.form: {e}"))),
    }
}

pub fn foliation(ctx: &Ctx) -> Result<Outcome, CliError> {
    let run: Run<FoliationParams> = Run::new(ctx, "foliation", "f_star")?;
    run.require_double()?;
    let m = run.map()?;
    let f = m.as_p2()?;
    let p = &run.params;
    let report = match (load_form(&p.form)?, p.mode) {
        (AnyForm::Exact(w), Mode::Exact) => {
            if f.exact().is_none() {
                return Err(CliError::Config(format!("foliation.mode: map '{}' has no exact coefficients", f.name)));
            }
            invariance_check(f, &w, CheckMode::Exact, p.tol)?
        }
        (AnyForm::Exact(w), Mode::Numeric) => invariance_check(f, &w, CheckMode::Numeric, p.tol)?,
        (AnyForm::Float(w), Mode::Numeric) => invariance_check_numeric(f, &w, p.tol)?,
        (AnyForm::Float(_), Mode::Exact) => {
            return Err(CliError::Config("foliation.mode: exact mode needs a form with exact coefficients".into()))
        }
    };
    let mut checks = Vec::new();
    let mut catalog = Vec::new();
    if p.catalog {
        for (e, ok) in catalog_certificates() {
            catalog.push(json!({"name": e.name, "case": e.case, "degree": e.degree, "zero": ok}));
            checks.push(Check::flag(&format!("catalog_{}", e.name), ok, Some(10)));
        }
        if f.name == "f_star" && p.form == "pencil_001" && p.mode == Mode::Exact {
            checks.push(Check::flag("f_star_pencil_exact_zero", report.verdict, Some(10)));
        }
    }
    run.finish(ctx, vec![], checks, vec![], json!({"report": report, "catalog": catalog}))
}

// product-structure

#[derive(Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct ProductParams {
    point: Option<Cplx>,
    #[serde(deserialize_with = "count")]
    order: usize,
    fraction: f64,
    start: Option<Cplx>,
    #[serde(deserialize_with = "count")]
    burn_in: usize,
    #[serde(deserialize_with = "count")]
    n_per: usize,
    #[serde(deserialize_with = "count")]
    chains: usize,
    #[serde(deserialize_with = "count")]
    min_local: usize,
    control: bool,
    #[serde(deserialize_with = "count")]
    control_n: usize,
    threshold: f64,
}

impl Default for ProductParams {
    fn default() -> Self {
        ProductParams {
            point: None,
            order: 24,
            fraction: 0.7,
            start: None,
            burn_in: 50,
            n_per: 150_000,
            chains: 8,
            min_local: 10_000,
            control: true,
            control_n: 10_000,
            threshold: skewlab::measure::product::PASS_Z,
        }
    }
}

pub fn product_structure(ctx: &Ctx) -> Result<Outcome, CliError> {
    let mut run: Run<ProductParams> = Run::new(ctx, "product-structure", "lattes4")?;
    run.require_double()?;
    let m = run.map()?;
    let seed = run.common.seed;
    let theta = match &m {
        MapRef::P1(t) => t.clone(),
        MapRef::P2(f) => f.base().cloned().ok_or(skewlab::Error::NotSkew("product-structure"))?,
    };
    let p = &mut run.params;
    let a0 = match p.point {
        Some(c) => P1::from_affine(c.0),
        None => default_base_point_1d(&theta, 1)?,
    };
    let a0_affine = a0.affine().ok_or_else(|| CliError::Config("product-structure.point: must be finite".into()))?;
    p.point = Some(Cplx(a0_affine));
    let start = p.start.get_or_insert(Cplx(C64::new(0.2, 0.7))).0;
    let k = koenigs_1d(&theta, &a0, p.order)?;
    let lc = k.local_coordinate(p.fraction)?;
    let cloud =
        sample_chains_1d(&theta, &P1::from_affine(start), p.burn_in, p.n_per, p.chains, rng::substream_seed(seed, 0))?;
    let rep = product_structure_1d(&cloud, &lc, rng::substream_seed(seed, 1));
    let z = rep.comparison.as_ref().map_or(f64::INFINITY, |c| c.max_abs_z);
    let c5 = (theta.name == "lattes4").then_some(5);
    let mut checks = vec![
        Check::at_least("points_in_disc", rep.n_local as f64, p.min_local as f64, c5),
        Check::flag("not_inconclusive", !rep.inconclusive, c5),
        Check::below("max_abs_z", z, p.threshold, c5),
    ];
    let mut control = Value::Null;
    if p.control {
        let ctrl = synthetic_cloud_1d(&lc, p.control_n, DiscDensity::Radial, rng::substream_seed(seed, 2))?;
        let rc = product_structure_1d(&ctrl, &lc, rng::substream_seed(seed, 1));
        let zc = rc.comparison.as_ref().map_or(0.0, |c| c.max_abs_z);
        checks.push(Check::at_least("control_max_abs_z", zc, 10.0, c5));
        control = serde_json::to_value(&rc).expect("serializes");
    }
    let result = json!({
        "report": rep,
        "control": control,
        "koenigs_radius": lc.radius,
        "rho": lc.rho,
        "convergence_radius": k.convergence_radius(),
    });
    run.finish(ctx, vec![], checks, vec![], result)
}
