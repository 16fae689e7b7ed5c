//! Pointwise evaluation of `f`, exact conditional expectations, Monte Carlo
//! estimates of the criterion functionals, and brute-force oracles.
//!
//! Two layers share the same formulas: public operations on [`OmegaPoint`]
//! (reference implementations, used by oracles and small-instance tests), and
//! an internal per-sample evaluator that exploits the piecewise-constant arc
//! memberships along an orbit to keep sign sampling minimal.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::family::SequenceFamily;
use crate::realization::{HorizonRule, OmegaPoint, SetSystem};

/// A fully built model instance: family, truncation, and the realized sets.
#[derive(Debug, Clone)]
pub struct ModelSpec {
    family: SequenceFamily,
    k_max: u32,
    sets: SetSystem,
    rule: HorizonRule,
}

impl ModelSpec {
    pub fn new(family: SequenceFamily, k_max: u32, rule: HorizonRule) -> Result<ModelSpec> {
        if family.variant() && rule != HorizonRule::Double {
            return Err(Error::Config(
                "the variant pattern spans 2 N_k signs; its horizon rule must be `double`".into(),
            ));
        }
        let sets = SetSystem::build_sets(&family, k_max, rule)?;
        Ok(ModelSpec { family, k_max, sets, rule })
    }

    /// Standard horizons for the pattern in use.
    pub fn default_for(family: SequenceFamily, k_max: u32) -> Result<ModelSpec> {
        let rule = if family.variant() { HorizonRule::Double } else { HorizonRule::Standard };
        ModelSpec::new(family, k_max, rule)
    }

    /// A spec over hand-built sets (e.g. enlarged rotation steps for tiny
    /// oracle instances); no quasi-invariance budget is implied.
    pub fn with_sets(family: SequenceFamily, sets: SetSystem, rule: HorizonRule) -> Result<ModelSpec> {
        if family.variant() && rule != HorizonRule::Double {
            return Err(Error::Config(
                "the variant pattern spans 2 N_k signs; its horizon rule must be `double`".into(),
            ));
        }
        let k_max = sets.k_max();
        if k_max > family.k_max() {
            return Err(Error::Config(format!(
                "sets carry {k_max} coordinates but the family stops at {}",
                family.k_max()
            )));
        }
        Ok(ModelSpec { family, k_max, sets, rule })
    }

    pub fn family(&self) -> &SequenceFamily {
        &self.family
    }
    pub fn sets(&self) -> &SetSystem {
        &self.sets
    }
    pub fn k_max(&self) -> u32 {
        self.k_max
    }
    pub fn rule(&self) -> HorizonRule {
        self.rule
    }
    pub fn variant(&self) -> bool {
        self.family.variant()
    }

    /// Oldest sign index any evaluation of `f` can read, as a positive span.
    pub fn sign_span(&self) -> Result<u64> {
        let mut span = 0u64;
        for k in 1..=self.k_max {
            let nk = self.family.n_k_u64(k)?;
            span = span.max(if self.variant() { 2 * nk } else { nk });
        }
        Ok(span)
    }

    /// Sign window covering every read of `f` circ `T^i` for `0 <= i <= n`.
    pub fn default_window(&self, n: u64) -> Result<std::ops::RangeInclusive<i64>> {
        Ok(-(self.sign_span()? as i64)..=n as i64)
    }
}

/// Identifiers for the Monte Carlo estimands.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum StatId {
    /// `E |I_n|`, `I_n = sum_{i=1}^n E(f T^i | F_0)`.
    AbsIn,
    /// `E |J_n|`, `J_n = f I_n`.
    AbsJn,
    /// `E |E(S_n|F_0)|^2 = E I_n^2` (reported as the squared norm).
    CondSnL2,
    /// `E f^2`.
    NormF2,
    /// `E (g - g T)^2`.
    TransferIncL2,
    /// `E m^2` with `m = f - g + g T`.
    MartL2,
    /// `E max_{1<=i<=n} |g T^i| / sqrt(n)`.
    MaxTransferRatio,
}

impl StatId {
    pub const ALL: [StatId; 7] = [
        StatId::AbsIn,
        StatId::AbsJn,
        StatId::CondSnL2,
        StatId::NormF2,
        StatId::TransferIncL2,
        StatId::MartL2,
        StatId::MaxTransferRatio,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            StatId::AbsIn => "AbsIn",
            StatId::AbsJn => "AbsJn",
            StatId::CondSnL2 => "CondSnL2",
            StatId::NormF2 => "NormF2",
            StatId::TransferIncL2 => "TransferIncL2",
            StatId::MartL2 => "MartL2",
            StatId::MaxTransferRatio => "MaxTransferRatio",
        }
    }
}

/// One Monte Carlo result; `stderr` is the sample standard deviation divided
/// by the square root of the sample count.
#[derive(Debug, Clone, PartialEq)]
pub struct McEstimate {
    pub statistic: StatId,
    pub n: u64,
    pub samples: u64,
    pub mean: f64,
    pub stderr: f64,
    pub seed: u64,
}

// ---------------------------------------------------------------------------
// Reference operations on OmegaPoint.
// ---------------------------------------------------------------------------

/// `f = sum_k theta_k pattern_k 1_{A_k}`; at most one `k` contributes.
pub fn eval_f(point: &mut OmegaPoint, spec: &ModelSpec) -> Result<f64> {
    let Some(k) = point.active_k(spec.sets()) else {
        return Ok(0.0);
    };
    let theta = spec.family().theta_k(k)?;
    let nk = spec.family().n_k_u64(k)? as i64;
    if !spec.variant() {
        return Ok(theta * point.sign(-nk)? as f64);
    }
    let mut acc = 0.0;
    for j in nk + 1..=2 * nk {
        acc += point.sign(-j)? as f64;
    }
    Ok(theta * acc)
}

/// Exact `E(f T^i | F_0)` at the point: the indicators are coordinate
/// functions, and a sign `e_m` conditions to itself for `m <= 0` and to zero
/// for `m > 0`, so the conditional expectation is a finite sign read, not an
/// approximation.
pub fn cond_exp_f_shift(point: &mut OmegaPoint, i: u64, spec: &ModelSpec) -> Result<f64> {
    assert!(i >= 1, "defined for shifts i >= 1");
    let i = i as i64;
    point.shift(i);
    let active = point.active_k(spec.sets());
    point.shift(-i);
    let Some(k) = active else {
        return Ok(0.0);
    };
    let theta = spec.family().theta_k(k)?;
    let nk = spec.family().n_k_u64(k)? as i64;
    if !spec.variant() {
        if i > nk {
            return Ok(0.0);
        }
        return Ok(theta * point.sign(i - nk)? as f64);
    }
    let mut acc = 0.0;
    for j in (nk + 1).max(i)..=2 * nk {
        acc += point.sign(i - j)? as f64;
    }
    Ok(theta * acc)
}

/// `I_n = sum_{i=1}^n E(f T^i | F_0)`; terms vanish beyond the sign span.
pub fn partial_sum_in(point: &mut OmegaPoint, n: u64, spec: &ModelSpec) -> Result<f64> {
    assert!(n >= 1);
    let stop = n.min(spec.sign_span()?);
    let mut acc = 0.0;
    for i in 1..=stop {
        acc += cond_exp_f_shift(point, i, spec)?;
    }
    Ok(acc)
}

/// `J_n = f I_n`.
pub fn partial_sum_jn(point: &mut OmegaPoint, n: u64, spec: &ModelSpec) -> Result<f64> {
    let f = eval_f(point, spec)?;
    if f == 0.0 {
        return Ok(0.0);
    }
    Ok(f * partial_sum_in(point, n, spec)?)
}

/// Transfer function `g = sum_{i=0}^inf E(f T^i | F_0)`; the sum is finitely
/// supported, and the `i = 0` term is `f` itself (every sign it reads is at a
/// nonpositive index).
pub fn transfer_g(point: &mut OmegaPoint, spec: &ModelSpec) -> Result<f64> {
    let mut acc = eval_f(point, spec)?;
    for i in 1..=spec.sign_span()? {
        acc += cond_exp_f_shift(point, i, spec)?;
    }
    Ok(acc)
}

/// `m = f - g + g T`, the martingale part of the decomposition.
pub fn martingale_part(point: &mut OmegaPoint, spec: &ModelSpec) -> Result<f64> {
    let f = eval_f(point, spec)?;
    let g0 = transfer_g(point, spec)?;
    point.shift(1);
    let g1 = transfer_g(point, spec)?;
    point.shift(-1);
    Ok(f - g0 + g1)
}

/// `E(f T^i | F_0)` by marginalization: average `f T^i` over every
/// assignment of the future signs it can read. Agrees with
/// [`cond_exp_f_shift`] exactly; used as its oracle.
pub fn oracle_cond_exp_f_shift(point: &mut OmegaPoint, i: u64, spec: &ModelSpec) -> Result<f64> {
    assert!(i >= 1);
    let i = i as i64;
    point.shift(i);
    let active = point.active_k(spec.sets());
    // future (index > 0 after unshifting) sign reads of f at the shifted time
    let mut future: Vec<i64> = Vec::new();
    if let Some(k) = active {
        let nk = spec.family().n_k_u64(k)? as i64;
        if !spec.variant() {
            if i - nk > 0 {
                future.push(-nk);
            }
        } else {
            for j in nk + 1..=2 * nk {
                if i - j > 0 {
                    future.push(-j);
                }
            }
        }
    }
    if future.len() > 20 {
        point.shift(-i);
        return Err(Error::OracleCapacity(format!("{} future signs to marginalize", future.len())));
    }
    let saved: Vec<i8> = future.iter().map(|&m| point.sign(m)).collect::<Result<_>>()?;
    let mut acc = 0.0;
    for bits in 0u32..1 << future.len() {
        for (b, &m) in future.iter().enumerate() {
            point.set_sign(m, if bits >> b & 1 == 1 { 1 } else { -1 })?;
        }
        acc += eval_f(point, spec)?;
    }
    let mean = acc / (1u64 << future.len()) as f64;
    for (&m, &v) in future.iter().zip(&saved) {
        point.set_sign(m, v)?;
    }
    point.shift(-i);
    Ok(mean)
}

// ---------------------------------------------------------------------------
// Exact combinatorial oracles.
// ---------------------------------------------------------------------------

/// `E |sum_{i=1}^N e_i|` exactly, from the binomial law of the sign sum.
pub fn exact_mean_abs_rademacher(n: u32) -> Result<f64> {
    if !(1..=64).contains(&n) {
        return Err(Error::RademacherRange(n));
    }
    let mut pmf = 0.5f64.powi(n as i32); // P(j heads), starting at j = 0
    let mut acc = 0.0;
    for j in 0..=n {
        acc += pmf * ((n as f64) - 2.0 * j as f64).abs();
        pmf *= (n - j) as f64 / (j + 1) as f64;
    }
    Ok(acc)
}

/// Exact `E |B_n^k|^2` for the variant pattern, where
/// `B_n^k = sum_{i=1}^n sum_{j=N+1}^{2N} E(e_{i-j} | F_0)`.
///
/// The coefficient of `e_{-m}` is the overlap of `[m+1, m+n]` with
/// `[N+1, 2N]`; the second moment is the sum of squared coefficients by
/// orthonormality. Piecewise-linear in `m`, so large horizons use closed
/// ramp/plateau sums instead of a loop.
pub fn bnk_second_moment_closed(n: f64, n_k: f64) -> f64 {
    if n < 1.0 || n_k < 1.0 {
        return 0.0;
    }
    let two_n = 2.0 * n_k;
    let c = |m: f64| ((m + n).min(two_n) - (m + 1.0).max(n_k + 1.0) + 1.0).max(0.0);
    let m_max = two_n - 1.0;
    if two_n <= 100_000.0 {
        let mut acc = 0.0;
        let mut m = 0.0;
        while m <= m_max {
            acc += c(m) * c(m);
            m += 1.0;
        }
        return acc;
    }
    // slope changes only where a min/max switches
    let mut cuts: Vec<f64> = Vec::new();
    for center in [0.0, n_k + 1.0 - n, n_k, two_n - n, m_max] {
        for off in [-1.0, 0.0, 1.0] {
            let v = (center + off).clamp(0.0, m_max);
            cuts.push(v);
        }
    }
    cuts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    cuts.dedup();
    // sum of squares of consecutive integers v_lo..=v_hi
    let f = |p: f64| p * (p + 1.0) * (2.0 * p + 1.0) / 6.0;
    let mut acc = 0.0;
    for w in cuts.windows(2) {
        let (a, b) = (w[0], w[1]);
        acc += c(a) * c(a);
        if b - a > 1.0 {
            // interior a+1 ..= b-1, constant slope in {-1, 0, 1}
            let (va, vb) = (c(a + 1.0), c(b - 1.0));
            if va == vb {
                acc += (b - a - 1.0) * va * va;
            } else {
                acc += f(va.max(vb)) - f(va.min(vb) - 1.0);
            }
        }
    }
    acc += c(m_max) * c(m_max);
    acc
}

/// [`bnk_second_moment_closed`] against a spec's realized horizons.
pub fn bnk_second_moment(spec: &ModelSpec, n: u64, k: u32) -> Result<f64> {
    if !spec.variant() {
        return Err(Error::UnsupportedCriterion {
            criterion: "bnk_second_moment".into(),
            model: "standard".into(),
        });
    }
    let nk = spec.family().n_k_u64(k)?;
    Ok(bnk_second_moment_closed(n as f64, nk as f64))
}

/// Sign-enumeration oracle for `E |B_n^k|^2` on tiny instances.
pub fn bnk_second_moment_enumerated(n: u64, n_k: u64) -> Result<f64> {
    let width = 2 * n_k; // signs e_0 .. e_{-(2N-1)}
    if width > 20 {
        return Err(Error::OracleCapacity(format!("2 N_k = {width} signs to enumerate")));
    }
    let mut acc = 0.0;
    for bits in 0u64..1 << width {
        let sign = |m: u64| if bits >> m & 1 == 1 { 1.0 } else { -1.0 }; // e_{-m}
        let mut b = 0.0;
        for i in 1..=n as i64 {
            for j in (n_k + 1) as i64..=(2 * n_k) as i64 {
                if i - j <= 0 {
                    b += sign((j - i) as u64);
                }
            }
        }
        acc += b * b;
    }
    Ok(acc / (1u64 << width) as f64)
}

// ---------------------------------------------------------------------------
// Per-sample evaluator.
// ---------------------------------------------------------------------------

/// Per-sample state: circle coordinates drawn first, then signs drawn lazily
/// in deterministic code order.
struct Sampler<'a> {
    spec: &'a ModelSpec,
    rho: Vec<f64>,
    alpha: Vec<f64>,
    theta: Vec<f64>,
    nk: Vec<i64>,
    x: Vec<f64>,
    signs: HashMap<i64, i8>,
    rng: ChaCha8Rng,
}

impl<'a> Sampler<'a> {
    fn new(spec: &'a ModelSpec, mut rng: ChaCha8Rng) -> Result<Sampler<'a>> {
        let k_max = spec.k_max();
        let mut rho = Vec::new();
        let mut alpha = Vec::new();
        let mut theta = Vec::new();
        let mut nk = Vec::new();
        for k in 1..=k_max {
            rho.push(spec.sets().rho_k(k)?);
            alpha.push(spec.sets().alpha_k(k)?);
            theta.push(spec.family().theta_k(k)?);
            nk.push(spec.family().n_k_u64(k)? as i64);
        }
        let x: Vec<f64> = (0..k_max).map(|_| rng.gen::<f64>()).collect();
        Ok(Sampler { spec, rho, alpha, theta, nk, x, signs: HashMap::new(), rng })
    }

    fn sign(&mut self, i: i64) -> f64 {
        let rng = &mut self.rng;
        *self.signs.entry(i).or_insert_with(|| if rng.gen::<bool>() { 1 } else { -1 }) as f64
    }

    fn inside(&self, idx: usize, u: i64) -> bool {
        (self.x[idx] + u as f64 * self.alpha[idx]).rem_euclid(1.0) < self.rho[idx]
    }

    fn active_at(&self, u: i64) -> Option<usize> {
        (0..self.rho.len()).rev().find(|&idx| self.inside(idx, u))
    }

    /// Partition `[u_lo, u_hi]` into maximal runs of constant active index.
    /// Arc memberships along an orbit change only when a coordinate crosses
    /// an arc endpoint, so the runs are few even over long horizons.
    fn segments(&self, u_lo: i64, u_hi: i64) -> Vec<(i64, i64, Option<usize>)> {
        let mut cuts: Vec<i64> = Vec::new();
        for idx in 0..self.rho.len() {
            let a = self.alpha[idx];
            if a == 0.0 {
                continue;
            }
            let lo_pos = self.x[idx] + u_lo as f64 * a;
            let hi_pos = self.x[idx] + u_hi as f64 * a;
            let m_lo = lo_pos.floor() as i64 - 1;
            let m_hi = hi_pos.ceil() as i64 + 1;
            for m in m_lo..=m_hi {
                for b in [0.0, self.rho[idx]] {
                    let u_star = (m as f64 + b - self.x[idx]) / a;
                    if u_star < u_lo as f64 - 2.0 || u_star > u_hi as f64 + 2.0 {
                        continue;
                    }
                    let base = u_star.ceil() as i64;
                    for off in [-1i64, 0, 1] {
                        let u = base + off;
                        if u > u_lo && u <= u_hi {
                            cuts.push(u);
                        }
                    }
                }
            }
        }
        cuts.push(u_lo);
        cuts.sort_unstable();
        cuts.dedup();
        let mut out: Vec<(i64, i64, Option<usize>)> = Vec::new();
        for (pos, &start) in cuts.iter().enumerate() {
            let end = if pos + 1 < cuts.len() { cuts[pos + 1] - 1 } else { u_hi };
            let act = self.active_at(start);
            match out.last_mut() {
                Some(last) if last.2 == act => last.1 = end,
                _ => out.push((start, end, act)),
            }
        }
        out
    }

    /// `f T^u` at this sample.
    fn f_at(&mut self, u: i64) -> f64 {
        let Some(idx) = self.active_at(u) else {
            return 0.0;
        };
        let (theta, nk) = (self.theta[idx], self.nk[idx]);
        if !self.spec.variant() {
            return theta * self.sign(u - nk);
        }
        let mut acc = 0.0;
        for j in nk + 1..=2 * nk {
            acc += self.sign(u - j);
        }
        theta * acc
    }

    /// `S_n = sum_{i=0}^{n-1} f T^i`.
    fn sn(&mut self, n: u64) -> f64 {
        let mut acc = 0.0;
        for (a, b, act) in self.segments(0, n as i64 - 1) {
            let Some(idx) = act else {
                continue;
            };
            let (theta, nk) = (self.theta[idx], self.nk[idx]);
            if !self.spec.variant() {
                for u in a..=b {
                    acc += theta * self.sign(u - nk);
                }
            } else {
                // aggregate the coefficient of each sign over the run
                for t in a - 2 * nk..=b - nk - 1 {
                    let cnt = (b.min(t + 2 * nk) - a.max(t + nk + 1) + 1) as f64;
                    if cnt > 0.0 {
                        acc += theta * cnt * self.sign(t);
                    }
                }
            }
        }
        acc
    }

    /// `I_n = sum_{i=1}^n E(f T^i | F_0)`.
    fn in_sum(&mut self, n: u64) -> f64 {
        let mut acc = 0.0;
        for (a, b, act) in self.segments(1, n as i64) {
            let Some(idx) = act else {
                continue;
            };
            let (theta, nk) = (self.theta[idx], self.nk[idx]);
            if !self.spec.variant() {
                // terms with u > N_k have a future sign and vanish
                for u in a..=b.min(nk) {
                    acc += theta * self.sign(u - nk);
                }
            } else {
                for m in 0..=2 * nk - 1 {
                    let lo = a.max(nk + 1 - m).max(1);
                    let hi = b.min(2 * nk - m);
                    if hi >= lo {
                        acc += theta * (hi - lo + 1) as f64 * self.sign(-m);
                    }
                }
            }
        }
        acc
    }

    /// `g T^i` directly; cost is proportional to the active runs, not the
    /// full span.
    fn g_at(&mut self, i: i64, span: i64) -> f64 {
        let mut acc = 0.0;
        for (a, b, act) in self.segments(i, i + span) {
            let Some(idx) = act else {
                continue;
            };
            let (theta, nk) = (self.theta[idx], self.nk[idx]);
            if !self.spec.variant() {
                // shift index i' = u - i contributes while i' <= N_k
                for u in a.max(i)..=b.min(i + nk) {
                    acc += theta * self.sign(u - nk);
                }
            } else {
                for u in a.max(i)..=b.min(i + 2 * nk) {
                    for j in (nk + 1).max(u - i)..=2 * nk {
                        acc += theta * self.sign(u - j);
                    }
                }
            }
        }
        acc
    }

    /// `max_{1<=i<=n} |g T^i|` via per-run prefix sums (standard pattern) or
    /// direct evaluation (variant, whose spans are short).
    fn max_abs_g(&mut self, n: u64, span: i64) -> f64 {
        let n = n as i64;
        if self.spec.variant() {
            let mut best = 0.0f64;
            for i in 1..=n {
                best = best.max(self.g_at(i, span).abs());
            }
            return best;
        }
        struct Run {
            a: i64,
            b: i64,
            theta: f64,
            nk: i64,
            /// `prefix[t] = sum_{u=a}^{a+t-1} e_{u-nk}`.
            prefix: Vec<f64>,
        }
        let mut runs: Vec<Run> = Vec::new();
        for (a, b, act) in self.segments(1, n + span) {
            let Some(idx) = act else {
                continue;
            };
            let mut prefix = Vec::with_capacity((b - a + 2) as usize);
            prefix.push(0.0);
            let nk = self.nk[idx];
            for u in a..=b {
                let last = *prefix.last().unwrap();
                let s = self.sign(u - nk);
                prefix.push(last + s);
            }
            runs.push(Run { a, b, theta: self.theta[idx], nk, prefix });
        }
        let mut best = 0.0f64;
        for i in 1..=n {
            let mut g = 0.0;
            for run in &runs {
                let lo = run.a.max(i);
                let hi = run.b.min(i + run.nk);
                if hi >= lo {
                    g += run.theta
                        * (run.prefix[(hi - run.a + 1) as usize] - run.prefix[(lo - run.a) as usize]);
                }
            }
            best = best.max(g.abs());
        }
        best
    }
}

// ---------------------------------------------------------------------------
// Monte Carlo drivers.
// ---------------------------------------------------------------------------

fn sample_rng(seed: u64, sample: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(sample);
    rng
}

fn replicate(stat: StatId, spec: &ModelSpec, n: u64, seed: u64, sample: u64) -> Result<f64> {
    let mut s = Sampler::new(spec, sample_rng(seed, sample))?;
    let span = spec.sign_span()? as i64;
    let v = match stat {
        StatId::AbsIn => s.in_sum(n).abs(),
        StatId::AbsJn => {
            let f = s.f_at(0);
            if f == 0.0 {
                0.0
            } else {
                (f * s.in_sum(n)).abs()
            }
        }
        StatId::CondSnL2 => {
            let i = s.in_sum(n);
            i * i
        }
        StatId::NormF2 => {
            let f = s.f_at(0);
            f * f
        }
        StatId::TransferIncL2 => {
            let d = s.g_at(0, span) - s.g_at(1, span);
            d * d
        }
        StatId::MartL2 => {
            let m = s.f_at(0) - s.g_at(0, span) + s.g_at(1, span);
            m * m
        }
        StatId::MaxTransferRatio => s.max_abs_g(n, span) / (n as f64).sqrt(),
    };
    if !v.is_finite() {
        return Err(Error::NonfiniteReplicate { sample, seed });
    }
    Ok(v)
}

fn collect_replicates(
    stat: StatId,
    spec: &ModelSpec,
    n: u64,
    samples: u64,
    seed: u64,
) -> Result<Vec<f64>> {
    // one independent stream per sample index: the result is identical for
    // any worker count
    (0..samples)
        .into_par_iter()
        .map(|s| replicate(stat, spec, n, seed, s))
        .collect()
}

fn mean_stderr(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Monte Carlo estimate of a statistic; deterministic per seed.
pub fn mc_estimate(
    stat: StatId,
    spec: &ModelSpec,
    n: u64,
    samples: u64,
    seed: u64,
) -> Result<McEstimate> {
    if samples < 100 {
        return Err(Error::Config(format!("need samples >= 100, got {samples}")));
    }
    if n < 1 {
        return Err(Error::Config("need n >= 1".into()));
    }
    let values = collect_replicates(stat, spec, n, samples, seed)?;
    let (mean, stderr) = mean_stderr(&values);
    Ok(McEstimate { statistic: stat, n, samples, mean, stderr, seed })
}

/// Result of a distributional check of `S_n` against the standard normal.
#[derive(Debug, Clone, PartialEq)]
pub struct CltReport {
    pub ks_distance: f64,
    pub sigma_hat: f64,
    pub n: u64,
    pub samples: u64,
    pub seed: u64,
}

fn ks_against_normal(values: &[f64]) -> Result<CltReport> {
    let (mean, _) = mean_stderr(values);
    let m = values.len() as f64;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (m - 1.0);
    let sigma = var.sqrt();
    if sigma < 1e-12 {
        return Err(Error::ZeroVariance);
    }
    let mut z: Vec<f64> = values.iter().map(|v| (v - mean) / sigma).collect();
    z.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let normal = Normal::new(0.0, 1.0).expect("standard normal");
    let mut ks = 0.0f64;
    for (i, &zi) in z.iter().enumerate() {
        let cdf = normal.cdf(zi);
        ks = ks.max((cdf - i as f64 / m).abs()).max(((i + 1) as f64 / m - cdf).abs());
    }
    Ok(CltReport { ks_distance: ks, sigma_hat: sigma, n: 0, samples: 0, seed: 0 })
}

/// Simulate `S_n` per sample, studentize by the across-sample standard
/// deviation of `S_n / sqrt(n)`, and measure the Kolmogorov-Smirnov distance
/// to the standard normal.
pub fn empirical_clt(spec: &ModelSpec, n: u64, samples: u64, seed: u64) -> Result<CltReport> {
    if n < 256 || samples < 1000 {
        return Err(Error::Config(format!("need n >= 256 and samples >= 1000, got ({n}, {samples})")));
    }
    let values: Vec<f64> = (0..samples)
        .into_par_iter()
        .map(|s| {
            let mut smp = Sampler::new(spec, sample_rng(seed, s))?;
            let v = smp.sn(n) / (n as f64).sqrt();
            if !v.is_finite() {
                return Err(Error::NonfiniteReplicate { sample: s, seed });
            }
            Ok(v)
        })
        .collect::<Result<_>>()?;
    let mut report = ks_against_normal(&values)?;
    report.n = n;
    report.samples = samples;
    report.seed = seed;
    Ok(report)
}

/// Control instance: `f := e_0`, bypassing the sets entirely. `S_n` is then a
/// simple symmetric random walk with a known binomial law.
pub fn empirical_clt_pure_signs(n: u64, samples: u64, seed: u64) -> Result<CltReport> {
    if n < 256 || samples < 1000 {
        return Err(Error::Config(format!("need n >= 256 and samples >= 1000, got ({n}, {samples})")));
    }
    let values: Vec<f64> = (0..samples)
        .into_par_iter()
        .map(|s| {
            let mut rng = sample_rng(seed, s);
            let sum: i64 = (0..n).map(|_| if rng.gen::<bool>() { 1i64 } else { -1 }).sum();
            sum as f64 / (n as f64).sqrt()
        })
        .collect();
    let mut report = ks_against_normal(&values)?;
    report.n = n;
    report.samples = samples;
    report.seed = seed;
    Ok(report)
}

/// Distribution summary of `max_{1<=i<=n} |g T^i| / sqrt(n)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TransferRatioSummary {
    pub n: u64,
    pub samples: u64,
    pub median: f64,
    pub q90: f64,
    pub seed: u64,
}

pub fn max_transfer_ratio(
    spec: &ModelSpec,
    n: u64,
    samples: u64,
    seed: u64,
) -> Result<TransferRatioSummary> {
    if samples < 100 {
        return Err(Error::Config(format!("need samples >= 100, got {samples}")));
    }
    let mut values = collect_replicates(StatId::MaxTransferRatio, spec, n, samples, seed)?;
    values.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let q = |p: f64| values[((values.len() - 1) as f64 * p).round() as usize];
    Ok(TransferRatioSummary { n, samples, median: q(0.5), q90: q(0.9), seed })
}

/// Monte Carlo `E(m e_0)` with `m = f - g + g T`: the martingale part is
/// orthogonal to every F_0-measurable functional, `e_0` in particular.
/// Returns `(mean, stderr)`.
pub fn mart_orthogonality_estimate(
    spec: &ModelSpec,
    samples: u64,
    seed: u64,
) -> Result<(f64, f64)> {
    if samples < 100 {
        return Err(Error::Config(format!("need samples >= 100, got {samples}")));
    }
    let span = spec.sign_span()? as i64;
    let values: Vec<f64> = (0..samples)
        .into_par_iter()
        .map(|s| {
            let mut smp = Sampler::new(spec, sample_rng(seed, s))?;
            let m = smp.f_at(0) - smp.g_at(0, span) + smp.g_at(1, span);
            Ok(m * smp.sign(0))
        })
        .collect::<Result<_>>()?;
    Ok(mean_stderr(&values))
}

/// `R_n = max{R >= 1 : sum_{k<R} theta_k (N_k + 1) <= n^{1/4}}`: the largest
/// prefix of coboundary blocks whose sup norms stay below the `o(sqrt n)`
/// envelope.
pub fn choose_rn(family: &SequenceFamily, n: u64) -> Result<u32> {
    assert!(n >= 1);
    let budget = (n as f64).powf(0.25);
    let mut r = 1u32;
    while r < 1_000_000 {
        match family.vnorm_prefix(r + 1) {
            Ok(p) if p <= budget => r += 1,
            _ => break,
        }
    }
    Ok(r)
}

/// One exported partial-sum path point.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct PathPoint {
    pub sample: u64,
    pub i: u64,
    pub sn: f64,
}

/// Raw `S_i` paths for offline plotting: checkpoints every `stride` steps up
/// to `n`, per sample. Deterministic per seed.
pub fn simulate_paths(
    spec: &ModelSpec,
    n: u64,
    samples: u64,
    seed: u64,
    stride: u64,
) -> Result<Vec<PathPoint>> {
    assert!(n >= 1 && stride >= 1);
    let per_sample: Vec<Vec<PathPoint>> = (0..samples)
        .into_par_iter()
        .map(|s| {
            let mut smp = Sampler::new(spec, sample_rng(seed, s))?;
            let mut acc = 0.0;
            let mut out = Vec::new();
            for i in 1..=n {
                acc += smp.f_at(i as i64 - 1);
                if i % stride == 0 || i == n {
                    out.push(PathPoint { sample: s, i, sn: acc });
                }
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;
    Ok(per_sample.into_iter().flatten().collect())
}

// ---------------------------------------------------------------------------
// Brute-force oracle.
// ---------------------------------------------------------------------------

/// Functionals the enumeration oracle can evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OracleFunctional {
    AbsIn(u64),
    AbsJn(u64),
    NormF2,
}

/// An enumerated expectation plus a rigorous bound on the grid error coming
/// from cells cut by an arc boundary.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleResult {
    pub value: f64,
    pub bound: f64,
}

/// Exact expectation by full enumeration: every sign pattern over `window`
/// crossed with a Riemann grid over the circle coordinates. The functional is
/// piecewise constant in the coordinates away from finitely many arc
/// boundaries, so midpoint evaluation is exact outside the cut cells.
pub fn brute_force_oracle(
    spec: &ModelSpec,
    functional: OracleFunctional,
    grid: u64,
    window: std::ops::RangeInclusive<i64>,
) -> Result<OracleResult> {
    let k_max = spec.k_max();
    let width = (window.end() - window.start() + 1) as u64;
    if k_max > 2 || width > 12 || grid < 1000 {
        return Err(Error::OracleCapacity(format!(
            "need k_max <= 2, window <= 12 signs, grid >= 1000; got ({k_max}, {width}, {grid})"
        )));
    }
    let cells = grid.pow(k_max);
    let evals = cells.saturating_mul(1 << width);
    if evals > 200_000_000 {
        return Err(Error::OracleCapacity(format!("{evals} evaluations")));
    }
    let n_shift = match functional {
        OracleFunctional::AbsIn(n) | OracleFunctional::AbsJn(n) => n,
        OracleFunctional::NormF2 => 0,
    };
    let lo = *window.start();
    let mut acc = 0.0f64;
    let mut max_abs = 0.0f64;
    for pattern in 0u64..1 << width {
        let signs: Vec<i8> =
            (0..width).map(|b| if pattern >> b & 1 == 1 { 1 } else { -1 }).collect();
        for cell in 0..cells {
            let mut x = Vec::with_capacity(k_max as usize);
            let mut c = cell;
            for _ in 0..k_max {
                x.push(((c % grid) as f64 + 0.5) / grid as f64);
                c /= grid;
            }
            let mut p = OmegaPoint::fixed(x, spec.sets(), signs.clone(), lo)?;
            let v = match functional {
                OracleFunctional::AbsIn(n) => partial_sum_in(&mut p, n, spec)?.abs(),
                OracleFunctional::AbsJn(n) => partial_sum_jn(&mut p, n, spec)?.abs(),
                OracleFunctional::NormF2 => {
                    let f = eval_f(&mut p, spec)?;
                    f * f
                }
            };
            max_abs = max_abs.max(v.abs());
            acc += v;
        }
    }
    let value = acc / (cells as f64 * (1u64 << width) as f64);
    // per coordinate, discontinuities lie on at most 2 (n + 1) boundary
    // circles (arc endpoints at each shift used); each cuts a 1/grid slab
    let bound = max_abs * k_max as f64 * 2.0 * (n_shift + 1) as f64 / grid as f64;
    Ok(OracleResult { value, bound })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::family::{GeomPolyTerm, Preset};
    use crate::realization::sample_point;
    use approx::assert_relative_eq;

    fn t(c: f64, b: f64, e: f64) -> GeomPolyTerm {
        GeomPolyTerm::new(c, b, e).unwrap()
    }

    /// k_max = 1 family with N_1 = n0, theta_1 = 1, rho_1 = 1/4.
    fn tiny_family(n0: f64, variant: bool) -> SequenceFamily {
        SequenceFamily::new(
            t(1.0, 0.25, 0.0),
            t(n0, 1.0, 0.0),
            t(1.0, 1.0, 0.0),
            0.25,
            variant,
            1,
        )
        .unwrap()
    }

    fn tiny_spec(n0: f64, variant: bool) -> ModelSpec {
        ModelSpec::default_for(tiny_family(n0, variant), 1).unwrap()
    }

    fn point_at(x: Vec<f64>, spec: &ModelSpec, signs: Vec<i8>, lo: i64) -> OmegaPoint {
        OmegaPoint::fixed(x, spec.sets(), signs, lo).unwrap()
    }

    #[test]
    fn eval_f_examples() {
        // in A_1 with e_{-N_1} = +1 and theta_1 = 1
        let spec = tiny_spec(2.0, false);
        let mut p = point_at(vec![0.1], &spec, vec![1, -1, 1], -2);
        assert_eq!(eval_f(&mut p, &spec).unwrap(), 1.0);
        // outside every arc
        let mut p = point_at(vec![0.9], &spec, vec![1, -1, 1], -2);
        assert_eq!(eval_f(&mut p, &spec).unwrap(), 0.0);
        // variant with cancelling signs e_{-3} = +1, e_{-4} = -1
        let spec = tiny_spec(2.0, true);
        let mut p = point_at(vec![0.1], &spec, vec![-1, 1, -1, 1, 1], -4);
        assert_eq!(eval_f(&mut p, &spec).unwrap(), 0.0);
    }

    #[test]
    fn cond_exp_examples() {
        // N_1 = 2, i = 1: reads e_{-1} when the shifted point is in A_1; with
        // alpha tiny, x = 0.1 stays in the arc
        let spec = tiny_spec(2.0, false);
        let mut p = point_at(vec![0.1], &spec, vec![1, 1, -1], -2);
        assert_eq!(cond_exp_f_shift(&mut p, 1, &spec).unwrap(), 1.0);
        // i = 3 > N_1: future sign, conditional mean zero
        assert_eq!(cond_exp_f_shift(&mut p, 3, &spec).unwrap(), 0.0);
    }

    #[test]
    fn cond_exp_matches_marginalization_oracle() {
        for variant in [false, true] {
            let spec = tiny_spec(2.0, variant);
            let mut rng = ChaCha8Rng::seed_from_u64(31);
            for _ in 0..300 {
                let mut p = sample_point(&mut rng, spec.sets(), -4..=4);
                for i in 1..=4u64 {
                    let direct = cond_exp_f_shift(&mut p, i, &spec).unwrap();
                    let oracle = oracle_cond_exp_f_shift(&mut p, i, &spec).unwrap();
                    assert!((direct - oracle).abs() < 1e-12, "variant={variant} i={i}");
                }
            }
        }
    }

    #[test]
    fn decomposition_identity() {
        for preset in [Preset::Ce2, Preset::Ce4] {
            let fam = SequenceFamily::preset(preset, 3);
            let spec = ModelSpec::default_for(fam, 3).unwrap();
            let span = spec.sign_span().unwrap() as i64;
            let mut rng = ChaCha8Rng::seed_from_u64(77);
            for _ in 0..200 {
                let mut p = sample_point(&mut rng, spec.sets(), -2 * span..=span + 2);
                let f = eval_f(&mut p, &spec).unwrap();
                let m = martingale_part(&mut p, &spec).unwrap();
                let g0 = transfer_g(&mut p, &spec).unwrap();
                p.shift(1);
                let g1 = transfer_g(&mut p, &spec).unwrap();
                p.shift(-1);
                assert!((f - (m + g0 - g1)).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn rademacher_moments() {
        assert_eq!(exact_mean_abs_rademacher(1).unwrap(), 1.0);
        assert_eq!(exact_mean_abs_rademacher(2).unwrap(), 1.0);
        assert_eq!(exact_mean_abs_rademacher(3).unwrap(), 1.5);
        assert!(exact_mean_abs_rademacher(0).is_err());
        assert!(exact_mean_abs_rademacher(65).is_err());
        // sqrt(2 N / pi) asymptotics as a sanity band
        let v = exact_mean_abs_rademacher(64).unwrap();
        let asym = (2.0 * 64.0 / std::f64::consts::PI).sqrt();
        assert!((v - asym).abs() / asym < 0.02);
    }

    #[test]
    fn bnk_closed_forms() {
        assert_eq!(bnk_second_moment_closed(2.0, 1.0), 2.0);
        assert_eq!(bnk_second_moment_closed(10.0, 1.0), 2.0);
        assert_eq!(bnk_second_moment_closed(4.0, 2.0), 13.0);
        assert_eq!(bnk_second_moment_closed(0.0, 3.0), 0.0);
        // closed ramp sums agree with the direct loop across the case split
        for &(n, nk) in &[(60_000.0, 70_000.0), (100_000.0, 60_001.0), (150_000.0, 50_500.0)] {
            let direct = {
                let two_n = 2.0 * nk;
                let c = |m: f64| ((m + n).min(two_n) - (m + 1.0).max(nk + 1.0) + 1.0).max(0.0);
                let mut acc = 0.0;
                let mut m = 0.0;
                while m <= two_n - 1.0 {
                    acc += c(m) * c(m);
                    m += 1.0;
                }
                acc
            };
            assert_relative_eq!(bnk_second_moment_closed(n, nk), direct, max_relative = 1e-12);
        }
    }

    #[test]
    fn bnk_matches_enumeration() {
        for nk in 1..=3u64 {
            for n in 0..=8u64 {
                let exact = bnk_second_moment_enumerated(n, nk).unwrap();
                assert_relative_eq!(
                    bnk_second_moment_closed(n as f64, nk as f64),
                    exact,
                    epsilon = 1e-9
                );
            }
        }
    }

    #[test]
    fn sampler_agrees_with_point_ops() {
        for preset in Preset::ALL {
            let fam = SequenceFamily::preset(preset, 3);
            let spec = ModelSpec::default_for(fam, 3).unwrap();
            let span = spec.sign_span().unwrap() as i64;
            for sample in 0..50u64 {
                let mut s = Sampler::new(&spec, sample_rng(9, sample)).unwrap();
                let n = 37u64;
                let fast = (s.f_at(0), s.in_sum(n), s.sn(n), s.g_at(0, span));
                // rebuild the same sample as an OmegaPoint: coordinates are
                // drawn first from the same stream
                let mut rng = sample_rng(9, sample);
                let x: Vec<f64> = (0..3).map(|_| rng.gen::<f64>()).collect();
                let mut p = OmegaPoint::fixed(x, spec.sets(), vec![1], 0).unwrap();
                p.attach_rng(sample_rng(123_456, sample));
                // port the signs the sampler drew so both views read the same
                // randomness
                for (&i, &v) in &s.signs {
                    p.ensure_sign(i, v);
                }
                let f = eval_f(&mut p, &spec).unwrap();
                let i_n = partial_sum_in(&mut p, n, &spec).unwrap();
                let mut sn = 0.0;
                for i in 0..n as i64 {
                    p.shift(i);
                    sn += eval_f(&mut p, &spec).unwrap();
                    p.shift(-i);
                }
                let g = transfer_g(&mut p, &spec).unwrap();
                assert!((fast.0 - f).abs() < 1e-12, "{preset:?} f sample {sample}");
                assert!((fast.1 - i_n).abs() < 1e-9, "{preset:?} I_n sample {sample}");
                assert!((fast.2 - sn).abs() < 1e-9, "{preset:?} S_n sample {sample}");
                assert!((fast.3 - g).abs() < 1e-9, "{preset:?} g sample {sample}");
            }
        }
    }

    #[test]
    fn normf2_matches_exact_truncation() {
        let fam = SequenceFamily::preset(Preset::Ce2, 4);
        let spec = ModelSpec::default_for(fam, 4).unwrap();
        let est = mc_estimate(StatId::NormF2, &spec, 1, 40_000, 11).unwrap();
        let mut exact = 0.0;
        for k in 1..=4u32 {
            exact += spec.family().theta_k(k).unwrap().powi(2)
                * spec.sets().measure_ak(k).unwrap()
                * if spec.variant() { spec.family().n_k(k).unwrap() } else { 1.0 };
        }
        assert!((est.mean - exact).abs() < 3.0 * est.stderr, "{} vs {exact}", est.mean);
    }

    #[test]
    fn zero_family_is_degenerate() {
        let spec = ModelSpec::default_for(SequenceFamily::zero(3), 3).unwrap();
        for stat in [StatId::AbsIn, StatId::NormF2, StatId::MartL2, StatId::MaxTransferRatio] {
            let est = mc_estimate(stat, &spec, 64, 200, 5).unwrap();
            assert_eq!(est.mean, 0.0);
            assert_eq!(est.stderr, 0.0);
        }
        assert!(matches!(empirical_clt(&spec, 256, 1000, 5), Err(Error::ZeroVariance)));
        let s = max_transfer_ratio(&spec, 64, 200, 5).unwrap();
        assert_eq!(s.median, 0.0);
        assert_eq!(s.q90, 0.0);
    }

    #[test]
    fn seed_determinism() {
        let fam = SequenceFamily::preset(Preset::Ce1, 4);
        let spec = ModelSpec::default_for(fam, 4).unwrap();
        let a = mc_estimate(StatId::CondSnL2, &spec, 128, 500, 42).unwrap();
        let b = mc_estimate(StatId::CondSnL2, &spec, 128, 500, 42).unwrap();
        assert_eq!(a, b);
        let c = mc_estimate(StatId::CondSnL2, &spec, 128, 500, 43).unwrap();
        assert_ne!(a.mean, c.mean);
    }

    #[test]
    fn pure_sign_clt_control() {
        let r = empirical_clt_pure_signs(1024, 5000, 7).unwrap();
        assert!(r.ks_distance < 0.05, "ks = {}", r.ks_distance);
        assert_relative_eq!(r.sigma_hat, 1.0, epsilon = 0.05);
    }

    #[test]
    fn choose_rn_examples() {
        let ce3 = SequenceFamily::preset(Preset::Ce3, 8);
        // theta_1 (N_1 + 1) = 2 * 5 = 10 <= 10 = (10^4)^{1/4}
        assert_eq!(choose_rn(&ce3, 10_000).unwrap(), 2);
        assert_eq!(choose_rn(&ce3, 1).unwrap(), 1);
        let mut prev = 0;
        for p in 0..20u32 {
            let r = choose_rn(&ce3, 1u64 << p).unwrap();
            assert!(r >= prev);
            prev = r;
        }
        // the sup-norm envelope holds by construction
        let n = 4096u64;
        let r = choose_rn(&ce3, n).unwrap();
        assert!(ce3.vnorm_prefix(r).unwrap() <= (n as f64).powf(0.25));
    }

    #[test]
    fn oracle_norm_f2_tiny() {
        // ||f||_2^2 on k_max = 1 is exactly theta^2 rho
        let spec = tiny_spec(2.0, false);
        let r = brute_force_oracle(&spec, OracleFunctional::NormF2, 4000, -2..=0).unwrap();
        assert!((r.value - 0.25).abs() <= r.bound + 1e-12);
        assert!(r.bound < 1e-3);
    }

    #[test]
    fn oracle_capacity_guard() {
        let spec = tiny_spec(2.0, false);
        assert!(matches!(
            brute_force_oracle(&spec, OracleFunctional::NormF2, 10, -2..=0),
            Err(Error::OracleCapacity(_))
        ));
        assert!(matches!(
            brute_force_oracle(&spec, OracleFunctional::NormF2, 4000, -14..=0),
            Err(Error::OracleCapacity(_))
        ));
    }
}
