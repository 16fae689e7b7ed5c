//! Decision procedures for the four criteria.
//!
//! Each criterion reduces, for this model, to convergence of a series whose
//! terms are geometric-polynomial in `k`. `sum_k c * b^k * k^s` converges iff
//! `b < 1`, or `b = 1` and `s < -1`, so the reduced series are exactly
//! decidable. The Maxwell-Woodroffe condition needs one more step: the growth
//! exponent of the inner sum `S(n)` in `n`.
//!
//! Series reductions use the pre-rounding generating term for `N_k`;
//! integerization changes terms by a bounded factor and never a convergence
//! class.

use crate::error::{Error, Result};
use crate::estimator::bnk_second_moment_closed;
use crate::family::{GeomPolyTerm, Preset, SequenceFamily};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SeriesStatus {
    Converges,
    Diverges,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Symbolic,
    NumericHeuristic,
}

/// Outcome of a single series classification, with a numeric partial-sum
/// trace as cross-check material.
#[derive(Debug, Clone)]
pub struct ConvergenceVerdict {
    pub status: SeriesStatus,
    pub method: Method,
    /// `(k, partial sum through k)` pairs.
    pub witness: Vec<(u32, f64)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Criterion {
    L2,
    McL1,
    Projective,
    MaxwellWoodroffe,
}

impl Criterion {
    pub fn name(&self) -> &'static str {
        match self {
            Criterion::L2 => "L2",
            Criterion::McL1 => "MC_L1",
            Criterion::Projective => "Projective",
            Criterion::MaxwellWoodroffe => "MW",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Strength {
    Iff,
    SufficientOnly,
}

/// Three-valued outcome: `Unknown` is reserved for the variant projective
/// test, where only sufficiency is available and a divergent sufficient
/// condition proves nothing.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Holds {
    Yes,
    No,
    Unknown,
}

#[derive(Debug, Clone)]
pub struct CriterionVerdict {
    pub criterion: Criterion,
    pub holds: Holds,
    pub strength: Strength,
    pub method: Method,
    pub witness: Vec<(u32, f64)>,
}

/// Asserted growth `S(n) ~ n^alpha (ln n)^beta` of the inner MW sum.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MwAsymptotics {
    pub n_power: f64,
    pub log_power: f64,
}

/// Tunables for the numeric-heuristic MW path.
#[derive(Debug, Clone)]
pub struct MwConfig {
    /// `|alpha - 1|` must exceed this for a numeric verdict.
    pub guard_band: f64,
    /// `n` grid for the log-log fit.
    pub fit_grid: Vec<u64>,
}

impl Default for MwConfig {
    fn default() -> Self {
        MwConfig { guard_band: 0.05, fit_grid: (10..=22).map(|p| 1u64 << p).collect() }
    }
}

const BASE_TOL: f64 = 1e-12;

fn near(x: f64, y: f64) -> bool {
    (x - y).abs() < 1e-9
}

/// Symbolic status of `sum_k term(k)`.
fn symbolic_status(term: &GeomPolyTerm) -> SeriesStatus {
    if term.is_zero() {
        return SeriesStatus::Converges;
    }
    if term.base < 1.0 - BASE_TOL {
        SeriesStatus::Converges
    } else if term.base > 1.0 + BASE_TOL {
        SeriesStatus::Diverges
    } else if term.expo < -1.0 {
        SeriesStatus::Converges
    } else {
        SeriesStatus::Diverges
    }
}

fn partial_sum_trace(term: &GeomPolyTerm, checkpoints: &[u32]) -> Vec<(u32, f64)> {
    let mut out = Vec::with_capacity(checkpoints.len());
    let mut acc = 0.0f64;
    let mut k = 1u32;
    for &cp in checkpoints {
        while k <= cp {
            if acc < 1e290 {
                acc += term.eval(k).unwrap_or(f64::INFINITY);
            }
            k += 1;
        }
        out.push((cp, acc));
    }
    out
}

/// Exact classification of `sum_k term(k)`.
pub fn classify_series(term: &GeomPolyTerm) -> ConvergenceVerdict {
    let checkpoints: Vec<u32> = (3..=14).map(|p| 1u32 << p).collect();
    ConvergenceVerdict {
        status: symbolic_status(term),
        method: Method::Symbolic,
        witness: partial_sum_trace(term, &checkpoints),
    }
}

/// Heuristic classification from finite evaluations only; used to cross-check
/// the symbolic rule away from the convergence boundary.
///
/// Two term ratios at doubling scales separate the geometric factor from the
/// polynomial one: with `R1 = term(512)/term(256)` and
/// `R2 = term(1024)/term(512)`, `R2/R1 = base^256`, and once the base is
/// flat, `log2 R1` estimates the polynomial exponent.
pub fn classify_series_numeric(term: &GeomPolyTerm) -> ConvergenceVerdict {
    let checkpoints: Vec<u32> = (3..=10).map(|p| 1u32 << p).collect();
    let witness = partial_sum_trace(term, &checkpoints);
    if term.is_zero() {
        return ConvergenceVerdict { status: SeriesStatus::Converges, method: Method::NumericHeuristic, witness };
    }
    let f = |k: u32| term.eval(k).unwrap_or(f64::INFINITY);
    let probe = f(1024);
    if probe < 1e-280 {
        // decayed below the reliable ratio range (possibly a hard underflow
        // to zero): summable beyond doubt
        return ConvergenceVerdict {
            status: SeriesStatus::Converges,
            method: Method::NumericHeuristic,
            witness,
        };
    }
    let (r1, r2) = (f(512) / f(256), f(1024) / f(512));
    let status = if !r1.is_finite() || !r2.is_finite() || r2 / r1 > 2.0 {
        SeriesStatus::Diverges
    } else if r2 / r1 < 0.5 {
        SeriesStatus::Converges
    } else {
        // base ~ 1 to within 2^(+-1/256); decide on the fitted exponent
        let s_hat = r1.log2();
        if s_hat < -1.0 {
            SeriesStatus::Converges
        } else {
            SeriesStatus::Diverges
        }
    };
    ConvergenceVerdict { status, method: Method::NumericHeuristic, witness }
}

/// Reduced series term for the L2 membership test.
pub fn l2_series_term(family: &SequenceFamily) -> GeomPolyTerm {
    let t2r = family.theta_term().powf(2.0).product(family.rho_term());
    if family.variant() {
        t2r.product(family.n_term())
    } else {
        t2r
    }
}

/// Reduced series term for the martingale-coboundary (L1) test.
pub fn mc_l1_series_term(family: &SequenceFamily) -> GeomPolyTerm {
    family.theta_term().product(&family.n_term().powf(0.5)).product(family.rho_term())
}

/// Reduced series term for the projective criterion.
pub fn projective_series_term(family: &SequenceFamily) -> GeomPolyTerm {
    let t2r = family.theta_term().powf(2.0).product(family.rho_term());
    if family.variant() {
        t2r.product(&family.n_term().powf(2.0))
    } else {
        t2r.product(&family.n_term().powf(0.5))
    }
}

/// `f` is square-integrable iff `sum theta_k^2 rho_k < inf` (standard), resp.
/// `sum theta_k^2 N_k rho_k < inf` (variant).
pub fn l2_test(family: &SequenceFamily) -> CriterionVerdict {
    let v = classify_series(&l2_series_term(family));
    CriterionVerdict {
        criterion: Criterion::L2,
        holds: if v.status == SeriesStatus::Converges { Holds::Yes } else { Holds::No },
        strength: Strength::Iff,
        method: v.method,
        witness: v.witness,
    }
}

/// Martingale-coboundary decomposition in L1 iff
/// `sum theta_k sqrt(N_k) rho_k < inf`. Standard pattern only; no such
/// characterization exists for the variant.
pub fn mc_l1_test(family: &SequenceFamily) -> Result<CriterionVerdict> {
    if family.variant() {
        return Err(Error::UnsupportedCriterion {
            criterion: "MC_L1".into(),
            model: "variant".into(),
        });
    }
    let v = classify_series(&mc_l1_series_term(family));
    Ok(CriterionVerdict {
        criterion: Criterion::McL1,
        holds: if v.status == SeriesStatus::Converges { Holds::Yes } else { Holds::No },
        strength: Strength::Iff,
        method: v.method,
        witness: v.witness,
    })
}

/// Projective criterion: iff `sum theta_k^2 sqrt(N_k) rho_k < inf` for the
/// standard pattern; for the variant only sufficiency is known
/// (`sum theta_k^2 N_k^2 rho_k < inf`, given L2), so a divergent reduced
/// series yields `Unknown`, never `No`.
pub fn projective_test(family: &SequenceFamily) -> CriterionVerdict {
    let v = classify_series(&projective_series_term(family));
    if !family.variant() {
        return CriterionVerdict {
            criterion: Criterion::Projective,
            holds: if v.status == SeriesStatus::Converges { Holds::Yes } else { Holds::No },
            strength: Strength::Iff,
            method: v.method,
            witness: v.witness,
        };
    }
    let l2_ok = l2_test(family).holds == Holds::Yes;
    let holds = if v.status == SeriesStatus::Converges && l2_ok { Holds::Yes } else { Holds::Unknown };
    CriterionVerdict {
        criterion: Criterion::Projective,
        holds,
        strength: Strength::SufficientOnly,
        method: v.method,
        witness: v.witness,
    }
}

/// Tail `sum_{k >= from_k} term(k)` of a convergent geometric-polynomial
/// series; `+inf` if divergent.
fn tail_sum(term: &GeomPolyTerm, from_k: u32) -> f64 {
    if term.is_zero() {
        return 0.0;
    }
    if symbolic_status(term) == SeriesStatus::Diverges {
        return f64::INFINITY;
    }
    if term.base < 1.0 - BASE_TOL {
        let mut acc = 0.0f64;
        let mut k = from_k;
        loop {
            let t = term.eval(k).unwrap_or(0.0);
            acc += t;
            k += 1;
            if t <= acc * 1e-17 + 1e-300 || k > from_k + 1_000_000 {
                // geometric remainder bound, padded for a growing poly factor
                let rem = t * term.base / (1.0 - term.base);
                acc += if term.expo > 0.0 { 2.0 * rem } else { rem };
                return acc;
            }
        }
    }
    // base == 1, expo < -1: explicit prefix + Euler-Maclaurin remainder
    let s = term.expo;
    let cut = from_k + 20_000;
    let mut acc = 0.0f64;
    for k in from_k..=cut {
        acc += term.eval(k).unwrap_or(0.0);
    }
    let x = (cut + 1) as f64;
    acc + term.coeff * (x.powf(s + 1.0) / (-(s + 1.0)) + x.powf(s) / 2.0 - s * x.powf(s - 1.0) / 12.0)
}

/// The MW inner sum `S(n)`: `sum_k theta_k^2 min(n, N_k) rho_k` for the
/// standard pattern; for the variant, `min(n, N_k)` is replaced by the exact
/// second moment of the block sum `B_n^k`.
pub fn mw_inner_sum(family: &SequenceFamily, n: u64) -> Result<f64> {
    assert!(n >= 1);
    if family.theta_term().is_zero() {
        return Ok(0.0);
    }
    let nf = n as f64;
    // evaluate through combined terms: factors like theta_k can overflow on
    // their own while the products stay bounded
    let t2r = family.theta_term().powf(2.0).product(family.rho_term());
    if family.variant() {
        let mut acc = 0.0f64;
        let mut k = 1u32;
        loop {
            let nk = family.n_k(k)?;
            let w = t2r.eval(k)? * bnk_second_moment_closed(nf, nk);
            acc += w;
            k += 1;
            if (nk >= nf && w <= acc * 1e-16 + 1e-300) || k > 20_000 {
                return Ok(acc);
            }
        }
    }
    let full = t2r.product(family.n_term()); // theta^2 N rho
    let mut acc = 0.0f64;
    let mut k = 1u32;
    loop {
        let nk = family.n_k(k)?;
        if nk >= nf {
            // saturated: the rest contributes n * tail of theta^2 rho
            return Ok(acc + nf * tail_sum(&t2r, k));
        }
        acc += t2r.eval(k)? * nk;
        k += 1;
        if k > 200_000 {
            // N_k grows too slowly to reach n in budget; bracket the rest
            return Ok(acc + tail_sum(&full, k).min(nf * tail_sum(&t2r, k)));
        }
    }
}

/// Symbolic `(alpha, beta)` growth of `S(n)`, when the split-index algebra
/// stays inside the poly-log class. `None` means: fall back to the numeric
/// fit.
pub fn mw_asymptotics_symbolic(family: &SequenceFamily) -> Option<MwAsymptotics> {
    if family.theta_term().is_zero() {
        return Some(MwAsymptotics { n_power: 0.0, log_power: 0.0 });
    }
    let nt = *family.n_term();
    let t2r = family.theta_term().powf(2.0).product(family.rho_term());
    // head h(k): summand below the split index; tail t(k): series weighted by
    // n^w above it
    let (head, tail, w, ) = if family.variant() {
        (t2r.product(&nt.powf(3.0)), t2r.product(&nt), 2.0)
    } else {
        (t2r.product(&nt), t2r, 1.0)
    };
    if symbolic_status(&tail) == SeriesStatus::Diverges {
        // f is not square-integrable; S(n)/n diverges
        return Some(MwAsymptotics { n_power: f64::INFINITY, log_power: 0.0 });
    }
    if symbolic_status(&head) == SeriesStatus::Converges {
        // S(n) <= sum_k h(k) < inf
        return Some(MwAsymptotics { n_power: 0.0, log_power: 0.0 });
    }
    let combine = |a: (f64, f64), b: (f64, f64)| {
        if (a.0, a.1) >= (b.0, b.1) {
            a
        } else {
            b
        }
    };
    if nt.base > 1.0 + BASE_TOL && near(nt.expo, 0.0) {
        // split index K ~ ln n / ln b_N
        let gamma = 1.0 / nt.base.ln();
        let head_growth = if near(head.base, 1.0) {
            if near(head.expo, -1.0) {
                (0.0, 0.0) // ln K = ln ln n, negligible against any tail power
            } else {
                (0.0, head.expo + 1.0)
            }
        } else {
            (gamma * head.base.ln(), head.expo)
        };
        let tail_growth = if near(tail.base, 1.0) {
            (w, tail.expo + 1.0)
        } else {
            (w + gamma * tail.base.ln(), tail.expo)
        };
        let (a, b) = combine(head_growth, tail_growth);
        return Some(MwAsymptotics { n_power: a, log_power: b });
    }
    if near(nt.base, 1.0) && nt.expo > 0.0 {
        // polynomial horizons: K ~ n^{1/s_N}; geometric head or tail terms
        // leave the poly-log class
        if !near(head.base, 1.0) || !near(tail.base, 1.0) {
            return None;
        }
        let head_growth = if head.expo >= -1.0 { ((head.expo + 1.0) / nt.expo, 0.0) } else { (0.0, 0.0) };
        let tail_growth = (w + (tail.expo + 1.0) / nt.expo, 0.0);
        let (a, b) = combine(head_growth, tail_growth);
        return Some(MwAsymptotics { n_power: a, log_power: b });
    }
    None
}

/// Least-squares fit of `log2 S(n)` against `log2 n` over the config grid.
pub fn mw_asymptotics_numeric(family: &SequenceFamily, config: &MwConfig) -> Result<(MwAsymptotics, Vec<(u32, f64)>)> {
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut trace = Vec::new();
    for &n in &config.fit_grid {
        let s = mw_inner_sum(family, n)?;
        trace.push((n.ilog2(), s));
        if s > 0.0 && s.is_finite() {
            xs.push((n as f64).log2());
            ys.push(s.log2());
        }
    }
    if xs.len() < 4 {
        return Ok((MwAsymptotics { n_power: 0.0, log_power: 0.0 }, trace));
    }
    let alpha = slope(&xs, &ys);
    // residual growth against log2 ln n estimates the log power
    let lx: Vec<f64> = xs.iter().map(|x| (x * std::f64::consts::LN_2).ln().log2()).collect();
    let ly: Vec<f64> = ys.iter().zip(&xs).map(|(y, x)| y - alpha * x).collect();
    let beta = slope(&lx, &ly);
    Ok((MwAsymptotics { n_power: alpha, log_power: beta }, trace))
}

fn slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

fn mw_rule(asy: &MwAsymptotics) -> SeriesStatus {
    // sum_n S(n)^{1/2} n^{-3/2} converges iff alpha < 1, or alpha = 1 and
    // beta < -2; the boundary beta = -2 is the divergent 1/(n ln n) case.
    if asy.n_power < 1.0 - 1e-9 || (near(asy.n_power, 1.0) && asy.log_power < -2.0 - 1e-9) {
        SeriesStatus::Converges
    } else {
        SeriesStatus::Diverges
    }
}

pub fn mw_test(family: &SequenceFamily) -> Result<CriterionVerdict> {
    mw_test_with(family, &MwConfig::default())
}

pub fn mw_test_with(family: &SequenceFamily, config: &MwConfig) -> Result<CriterionVerdict> {
    if let Some(asy) = mw_asymptotics_symbolic(family) {
        let trace: Vec<(u32, f64)> = [10u32, 12, 14, 16, 18, 20]
            .iter()
            .map(|&p| Ok((p, mw_inner_sum(family, 1u64 << p)?)))
            .collect::<Result<_>>()?;
        return Ok(CriterionVerdict {
            criterion: Criterion::MaxwellWoodroffe,
            holds: if mw_rule(&asy) == SeriesStatus::Converges { Holds::Yes } else { Holds::No },
            strength: Strength::Iff,
            method: Method::Symbolic,
            witness: trace,
        });
    }
    let (asy, trace) = mw_asymptotics_numeric(family, config)?;
    let holds = if (asy.n_power - 1.0).abs() > config.guard_band {
        if mw_rule(&asy) == SeriesStatus::Converges {
            Holds::Yes
        } else {
            Holds::No
        }
    } else if (asy.log_power + 2.0).abs() > 0.5 {
        if asy.log_power < -2.0 {
            Holds::Yes
        } else {
            Holds::No
        }
    } else {
        // alpha inside the guard band and beta too close to the boundary to
        // trust a finite fit
        Holds::Unknown
    };
    Ok(CriterionVerdict {
        criterion: Criterion::MaxwellWoodroffe,
        holds,
        strength: Strength::Iff,
        method: Method::NumericHeuristic,
        witness: trace,
    })
}

/// The Theorem's expectations for a preset; `None` means the paper asserts
/// nothing for that slot.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TheoremRow {
    pub l2: Option<Holds>,
    pub mc_l1: Option<Holds>,
    pub projective: Option<Holds>,
    pub mw: Option<Holds>,
}

pub fn theorem_row(preset: Preset) -> TheoremRow {
    use Holds::*;
    match preset {
        Preset::Ce1 => TheoremRow { l2: Some(Yes), mc_l1: Some(No), projective: Some(Yes), mw: Some(Yes) },
        Preset::Ce2 => TheoremRow { l2: Some(Yes), mc_l1: Some(Yes), projective: Some(No), mw: Some(Yes) },
        Preset::Ce3 => TheoremRow { l2: Some(Yes), mc_l1: Some(Yes), projective: None, mw: Some(No) },
        Preset::Ce4 => TheoremRow { l2: Some(Yes), mc_l1: None, projective: Some(Yes), mw: Some(No) },
    }
}

/// Run every applicable test; when `expected` is given (presets), any
/// disagreement with the Theorem row is a hard error.
pub fn criteria_table(family: &SequenceFamily, expected: Option<&TheoremRow>) -> Result<Vec<CriterionVerdict>> {
    let mut out = vec![l2_test(family)];
    if !family.variant() {
        out.push(mc_l1_test(family)?);
    }
    out.push(projective_test(family));
    out.push(mw_test(family)?);
    if let Some(row) = expected {
        for v in &out {
            let want = match v.criterion {
                Criterion::L2 => row.l2,
                Criterion::McL1 => row.mc_l1,
                Criterion::Projective => row.projective,
                Criterion::MaxwellWoodroffe => row.mw,
            };
            if let Some(want) = want {
                if v.holds != want {
                    return Err(Error::TheoremMismatch {
                        criterion: v.criterion.name().into(),
                        expected: format!("{want:?}"),
                        got: format!("{:?}", v.holds),
                    });
                }
            }
        }
    }
    Ok(out)
}
