//! Parameter sequences of the model.
//!
//! Every sequence the model depends on (arc lengths `rho_k`, horizons `N_k`,
//! weights `theta_k`) is a geometric-polynomial term `coeff * base^k * k^expo`.
//! Within that class all the criterion series are exactly decidable, which is
//! what the `criteria` module exploits.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest k for which a term must stay finite in `f64`.
const VALIDATE_K: u32 = 200;

/// A sequence term `coeff * base^k * k^expo`, defined for `k >= 1`.
///
/// `coeff == 0` denotes the identically-zero term and is only meaningful as a
/// whole-family degenerate flag.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeomPolyTerm {
    pub coeff: f64,
    pub base: f64,
    pub expo: f64,
}

impl GeomPolyTerm {
    pub fn new(coeff: f64, base: f64, expo: f64) -> Result<Self> {
        if !(coeff >= 0.0 && coeff.is_finite()) {
            return Err(Error::InvalidTerm(format!("coeff must be >= 0, got {coeff}")));
        }
        if !(base > 0.0 && base.is_finite()) {
            return Err(Error::InvalidTerm(format!("base must be > 0, got {base}")));
        }
        if !expo.is_finite() {
            return Err(Error::InvalidTerm(format!("expo must be finite, got {expo}")));
        }
        let term = Self { coeff, base, expo };
        // Finite through k = VALIDATE_K, so downstream partial sums never
        // silently hit infinity inside the supported range.
        if coeff > 0.0 && !term.eval_unchecked(VALIDATE_K).is_finite() {
            return Err(Error::InvalidTerm(format!(
                "term {coeff}*{base}^k*k^{expo} overflows before k = {VALIDATE_K}"
            )));
        }
        Ok(term)
    }

    pub fn is_zero(&self) -> bool {
        self.coeff == 0.0
    }

    fn eval_unchecked(&self, k: u32) -> f64 {
        self.coeff * self.base.powi(k as i32) * (k as f64).powf(self.expo)
    }

    /// `coeff * base^k * k^expo` for `k >= 1`.
    pub fn eval(&self, k: u32) -> Result<f64> {
        assert!(k >= 1, "terms are defined for k >= 1");
        let v = self.eval_unchecked(k);
        if !v.is_finite() {
            return Err(Error::TermRange { k });
        }
        Ok(v)
    }

    /// Pointwise product of two terms, again a geometric-polynomial term.
    pub fn product(&self, other: &GeomPolyTerm) -> GeomPolyTerm {
        GeomPolyTerm {
            coeff: self.coeff * other.coeff,
            base: self.base * other.base,
            expo: self.expo + other.expo,
        }
    }

    /// `term(k)^p` as a term; requires a nonnegative term, which all family
    /// sequences are.
    pub fn powf(&self, p: f64) -> GeomPolyTerm {
        GeomPolyTerm {
            coeff: self.coeff.powf(p),
            base: self.base.powf(p),
            expo: self.expo * p,
        }
    }

    pub fn scaled(&self, c: f64) -> GeomPolyTerm {
        GeomPolyTerm { coeff: self.coeff * c, ..*self }
    }
}

/// The four counterexample presets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    Ce1,
    Ce2,
    Ce3,
    Ce4,
}

impl Preset {
    pub const ALL: [Preset; 4] = [Preset::Ce1, Preset::Ce2, Preset::Ce3, Preset::Ce4];

    pub fn name(&self) -> &'static str {
        match self {
            Preset::Ce1 => "ce1",
            Preset::Ce2 => "ce2",
            Preset::Ce3 => "ce3",
            Preset::Ce4 => "ce4",
        }
    }

    pub fn parse(s: &str) -> Result<Preset> {
        match s {
            "ce1" => Ok(Preset::Ce1),
            "ce2" => Ok(Preset::Ce2),
            "ce3" => Ok(Preset::Ce3),
            "ce4" => Ok(Preset::Ce4),
            other => Err(Error::UnknownPreset(other.to_string())),
        }
    }

    /// ce3's invariance-principle runs need quasi-invariance over horizons
    /// that grow with the simulated time, not just with `N_k`.
    pub fn needs_extended_horizon(&self) -> bool {
        matches!(self, Preset::Ce3)
    }
}

impl std::str::FromStr for Preset {
    type Err = Error;
    fn from_str(s: &str) -> Result<Preset> {
        Preset::parse(s)
    }
}

/// The parameter quadruple `(rho_k, N_k, theta_k, eps_k)` plus `lambda` and
/// `a = 1 - sum_k lambda^k`.
///
/// Immutable after construction; safe to share across workers.
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceFamily {
    rho: GeomPolyTerm,
    n_seq: GeomPolyTerm,
    theta: GeomPolyTerm,
    lambda: f64,
    variant: bool,
    k_max: u32,
    /// Integerized, monotonized `N_k` for `k = 1..=k_max` (exact integers in
    /// f64 while representable).
    n_int: Vec<f64>,
    /// `eps_1 ..= eps_{k_max+1}`; one extra so `delta_k = eps_k - eps_{k+1}`
    /// is defined through `k_max`.
    eps: Vec<f64>,
}

impl SequenceFamily {
    pub fn new(
        rho: GeomPolyTerm,
        n_seq: GeomPolyTerm,
        theta: GeomPolyTerm,
        lambda: f64,
        variant: bool,
        k_max: u32,
    ) -> Result<Self> {
        if !(lambda > 0.0 && lambda < 0.5) {
            return Err(Error::InvalidFamily(format!(
                "lambda must satisfy 0 < lambda < 1/2, got {lambda}"
            )));
        }
        if !(1..=64).contains(&k_max) {
            return Err(Error::InvalidFamily(format!("k_max must be in 1..=64, got {k_max}")));
        }
        if !rho.is_zero() && (rho.base != lambda || rho.expo != 0.0 || rho.coeff != 1.0) {
            return Err(Error::InvalidFamily(format!(
                "rho must be exactly lambda^k (coeff 1, base {lambda}, expo 0)"
            )));
        }
        let n_int = integerize(&n_seq, k_max)?;
        let eps = choose_epsilons(&theta, &n_int, variant, k_max)?;
        Ok(Self { rho, n_seq, theta, lambda, variant, k_max, n_int, eps })
    }

    pub fn preset(preset: Preset, k_max: u32) -> SequenceFamily {
        let t = |c, b, e| GeomPolyTerm::new(c, b, e).expect("preset term");
        let lambda = 0.25;
        let rho = t(1.0, lambda, 0.0);
        let (n_seq, theta, variant) = match preset {
            // rho_k = 1/4^k, N_k = 4^{2k}, theta_k = 1/k
            Preset::Ce1 => (t(1.0, 16.0, 0.0), t(1.0, 1.0, -1.0), false),
            // N_k = k^2, theta_k = 2^k/k
            Preset::Ce2 => (t(1.0, 1.0, 2.0), t(1.0, 2.0, -1.0), false),
            // N_k = 4^k, theta_k = 2^k/k^{3/2}
            Preset::Ce3 => (t(1.0, 4.0, 0.0), t(1.0, 2.0, -1.5), false),
            // N_k = 2^k, theta_k = 1/k, pattern function over signs
            // e_{-2N_k}..e_{-N_k-1}
            Preset::Ce4 => (t(1.0, 2.0, 0.0), t(1.0, 1.0, -1.0), true),
        };
        SequenceFamily::new(rho, n_seq, theta, lambda, variant, k_max)
            .expect("presets are valid families")
    }

    pub fn zero(k_max: u32) -> SequenceFamily {
        let t = |c, b, e| GeomPolyTerm::new(c, b, e).expect("term");
        SequenceFamily::new(
            t(1.0, 0.25, 0.0),
            t(1.0, 1.0, 0.0),
            t(0.0, 1.0, 0.0),
            0.25,
            false,
            k_max,
        )
        .expect("zero family")
    }

    pub fn rho_term(&self) -> &GeomPolyTerm {
        &self.rho
    }
    pub fn n_term(&self) -> &GeomPolyTerm {
        &self.n_seq
    }
    pub fn theta_term(&self) -> &GeomPolyTerm {
        &self.theta
    }
    pub fn lambda(&self) -> f64 {
        self.lambda
    }
    pub fn variant(&self) -> bool {
        self.variant
    }
    pub fn k_max(&self) -> u32 {
        self.k_max
    }

    /// `a = 1 - sum_{k>=1} lambda^k = (1 - 2 lambda)/(1 - lambda)`.
    pub fn a(&self) -> f64 {
        (1.0 - 2.0 * self.lambda) / (1.0 - self.lambda)
    }

    pub fn rho_k(&self, k: u32) -> f64 {
        self.rho.eval(k).expect("rho_k < 1 cannot overflow")
    }

    pub fn theta_k(&self, k: u32) -> Result<f64> {
        self.theta.eval(k)
    }

    /// Integerized, monotonized horizon sequence. Within `k <= k_max` this is
    /// the cached running max; beyond it the rounded raw term is used (the
    /// series machinery only needs the growth class there).
    pub fn n_k(&self, k: u32) -> Result<f64> {
        assert!(k >= 1);
        if k <= self.k_max {
            return Ok(self.n_int[(k - 1) as usize]);
        }
        let raw = self.n_seq.eval(k)?.round().max(1.0);
        Ok(raw.max(self.n_int[(self.k_max - 1) as usize]))
    }

    /// `N_k` as an exact integer count, for simulation horizons.
    pub fn n_k_u64(&self, k: u32) -> Result<u64> {
        let v = self.n_k(k)?;
        if v > (1u64 << 53) as f64 {
            return Err(Error::HorizonOverflow { k });
        }
        Ok(v as u64)
    }

    /// `eps_k`, defined for `k = 1..=k_max + 1`.
    pub fn eps_k(&self, k: u32) -> f64 {
        assert!(k >= 1 && k <= self.k_max + 1, "eps defined through k_max + 1");
        self.eps[(k - 1) as usize]
    }

    /// `delta_k = eps_k - eps_{k+1} > 0`, defined for `k <= k_max`.
    pub fn delta_k(&self, k: u32) -> f64 {
        self.eps_k(k) - self.eps_k(k + 1)
    }

    /// `sum_{j=1}^{r-1} theta_j (N_j + 1)`, the sup-norm prefix of the
    /// coboundary blocks `v_j`; drives the `R_n` sequence.
    pub fn vnorm_prefix(&self, r: u32) -> Result<f64> {
        let mut acc = 0.0;
        for j in 1..r {
            acc += self.theta_k(j)? * (self.n_k(j)? + 1.0);
        }
        Ok(acc)
    }

    pub fn to_config(&self) -> FamilyConfig {
        FamilyConfig {
            rho: self.rho,
            n_seq: self.n_seq,
            theta: self.theta,
            lambda: self.lambda,
            variant: self.variant,
            k_max: self.k_max,
        }
    }
}

/// `N_k := max(N_{k-1}, max(1, round(term(k))))`.
fn integerize(n_seq: &GeomPolyTerm, k_max: u32) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(k_max as usize);
    let mut prev = 1.0f64;
    for k in 1..=k_max {
        let v = n_seq.eval(k)?.round().max(1.0).max(prev);
        out.push(v);
        prev = v;
    }
    Ok(out)
}

/// The epsilon rule: `eps_0 = 1/8`,
/// `eps_k = min(eps_{k-1}/2, (theta_k * M_k^2 * k^2)^{-2})` where `M_k` is the
/// quasi-invariance span (`N_k`, or `2 N_k` for the variant pattern). This
/// makes `theta_k M_k^2 sqrt(eps_k) <= k^{-2}`, so both summability conditions
/// the model needs hold with room to spare, and the sequence is strictly
/// decreasing to zero.
fn choose_epsilons(
    theta: &GeomPolyTerm,
    n_int: &[f64],
    variant: bool,
    k_max: u32,
) -> Result<Vec<f64>> {
    let mut eps = Vec::with_capacity(k_max as usize + 1);
    let mut prev = 0.125f64;
    for k in 1..=k_max + 1 {
        // One index past k_max: reuse the last horizon, only the halving
        // branch matters for monotonicity there.
        let n = if k <= k_max { n_int[(k - 1) as usize] } else { n_int[(k_max - 1) as usize] };
        let m = if variant { 2.0 * n } else { n };
        let th = theta.eval(k)?;
        let cap = if th > 0.0 {
            // square the reciprocal: squaring first can overflow for huge
            // horizons even though the final value is representable
            (th * m * m * (k as f64) * (k as f64)).recip().powi(2)
        } else {
            f64::INFINITY
        };
        let e = (prev / 2.0).min(cap);
        if e.is_nan() || e <= 0.0 {
            return Err(Error::InvalidFamily(format!("eps_{k} underflowed to zero")));
        }
        eps.push(e);
        prev = e;
    }
    Ok(eps)
}

/// JSON-serializable family description.
///
/// Keys: `rho/{coeff,base,expo}`, `n_seq/{...}`, `theta/{...}`, `lambda`,
/// `variant`, `k_max`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FamilyConfig {
    pub rho: GeomPolyTerm,
    pub n_seq: GeomPolyTerm,
    pub theta: GeomPolyTerm,
    pub lambda: f64,
    pub variant: bool,
    pub k_max: u32,
}

impl FamilyConfig {
    pub fn build(&self) -> Result<SequenceFamily> {
        SequenceFamily::new(self.rho, self.n_seq, self.theta, self.lambda, self.variant, self.k_max)
    }
}
