//! A concrete, exactly simulatable probability space for the model.
//!
//! The space is a product of a two-sided i.i.d. sign sequence and one circle
//! coordinate per set index `k`. The shift advances the sign index by one and
//! rotates coordinate `k` by a tiny angle `alpha_k`. The quasi-invariant sets
//! `A_k` are arcs `[0, rho_k)` in their own coordinate, minus the arcs of all
//! higher indices, so measures and symmetric differences reduce to interval
//! arithmetic on the product measure.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::family::SequenceFamily;

/// How far quasi-invariance must reach for set `k`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HorizonRule {
    /// `H_k = N_k`.
    Standard,
    /// `H_k = N_k + 1`.
    PlusOne,
    /// `H_k = 2 N_k`; required by the variant pattern, whose signs span
    /// `e_{-2N_k}..e_{-N_k-1}`.
    Double,
    /// `H_k = max(min(n_k, n_max), N_k + 1)` where `n_k` is the largest time
    /// at which block `k` is still inside the active prefix `R_n`; needed for
    /// invariance-principle runs whose orbits outlive `N_k`. `n_max` caps the
    /// horizon at the largest simulated time.
    IpExtended { n_max: u64 },
}

/// The arc system: lengths, rotation steps, and guaranteed horizons.
#[derive(Debug, Clone, PartialEq)]
pub struct SetSystem {
    rho: Vec<f64>,
    alpha: Vec<f64>,
    horizon: Vec<u64>,
    /// Quasi-invariance budget per k; `+inf` for hand-built systems.
    eps: Vec<f64>,
}

impl SetSystem {
    /// Arc system for a family truncated at `k_max`, with
    /// `alpha_k = delta_k / (4 H_k)`.
    pub fn build_sets(family: &SequenceFamily, k_max: u32, rule: HorizonRule) -> Result<SetSystem> {
        if k_max > family.k_max() {
            return Err(Error::SetIndex { k: k_max, k_max: family.k_max() });
        }
        let mut rho = Vec::with_capacity(k_max as usize);
        let mut alpha = Vec::with_capacity(k_max as usize);
        let mut horizon = Vec::with_capacity(k_max as usize);
        let mut eps = Vec::with_capacity(k_max as usize);
        for k in 1..=k_max {
            let nk = family.n_k_u64(k)?;
            let h = match rule {
                HorizonRule::Standard => nk,
                HorizonRule::PlusOne => nk + 1,
                HorizonRule::Double => 2 * nk,
                HorizonRule::IpExtended { n_max } => {
                    // largest n with n^{1/4} below the sup-norm prefix through
                    // block k, i.e. with R_n <= k
                    let p = family.vnorm_prefix(k + 1)?;
                    let n_k = if p.powi(4) > n_max as f64 {
                        n_max
                    } else {
                        (p.powi(4).ceil() as u64).saturating_sub(1).min(n_max)
                    };
                    n_k.max(nk + 1)
                }
            };
            let d = family.delta_k(k);
            if d.is_nan() || d <= 0.0 {
                return Err(Error::InvalidFamily(format!("delta_{k} = {d} must be positive")));
            }
            rho.push(family.rho_k(k));
            alpha.push(d / (4.0 * h as f64));
            horizon.push(h);
            eps.push(family.eps_k(k));
        }
        Ok(SetSystem { rho, alpha, horizon, eps })
    }

    /// Hand-built system for tiny oracle instances; no quasi-invariance
    /// budget is claimed.
    pub fn custom(rho: Vec<f64>, alpha: Vec<f64>, horizon: Vec<u64>) -> Result<SetSystem> {
        if rho.len() != alpha.len() || rho.len() != horizon.len() {
            return Err(Error::InvalidFamily("rho/alpha/horizon lengths differ".into()));
        }
        for (&r, (&a, &h)) in rho.iter().zip(alpha.iter().zip(&horizon)) {
            if !(r > 0.0 && r < 1.0 && (0.0..1.0).contains(&a) && h >= 1) {
                return Err(Error::InvalidFamily(format!(
                    "need rho in (0,1), alpha in [0,1), horizon >= 1; got ({r}, {a}, {h})"
                )));
            }
        }
        let eps = vec![f64::INFINITY; rho.len()];
        Ok(SetSystem { rho, alpha, horizon, eps })
    }

    pub fn k_max(&self) -> u32 {
        self.rho.len() as u32
    }

    pub fn is_empty(&self) -> bool {
        self.rho.is_empty()
    }

    fn check_k(&self, k: u32) -> Result<usize> {
        if k >= 1 && k <= self.k_max() {
            Ok((k - 1) as usize)
        } else {
            Err(Error::SetIndex { k, k_max: self.k_max() })
        }
    }

    pub fn rho_k(&self, k: u32) -> Result<f64> {
        Ok(self.rho[self.check_k(k)?])
    }

    pub fn alpha_k(&self, k: u32) -> Result<f64> {
        Ok(self.alpha[self.check_k(k)?])
    }

    pub fn horizon_k(&self, k: u32) -> Result<u64> {
        Ok(self.horizon[self.check_k(k)?])
    }

    pub fn eps_k(&self, k: u32) -> Result<f64> {
        Ok(self.eps[self.check_k(k)?])
    }

    /// Exact `mu(A_k) = rho_k * prod_{j>k} (1 - rho_j)` by coordinate
    /// independence.
    pub fn measure_ak(&self, k: u32) -> Result<f64> {
        let idx = self.check_k(k)?;
        let mut m = self.rho[idx];
        for j in idx + 1..self.rho.len() {
            m *= 1.0 - self.rho[j];
        }
        Ok(m)
    }

    /// Exact `mu(T^{-i} A_k  symdiff  T^{-j} A_k)`.
    ///
    /// Both sets constrain coordinates `k..k_max` independently, so the
    /// intersection measure is a product of per-coordinate overlaps of arcs
    /// displaced by `(i - j) alpha_m`, and the symmetric difference is
    /// `2 (mu(A_k) - mu(intersection))`.
    pub fn symmdiff_exact(&self, k: u32, i: u64, j: u64) -> Result<f64> {
        let idx = self.check_k(k)?;
        if i == j {
            return Ok(0.0);
        }
        let steps = i.abs_diff(j) as f64;
        let mut inter = 1.0f64;
        for m in idx..self.rho.len() {
            let rho = self.rho[m];
            let d = (steps * self.alpha[m]).rem_euclid(1.0);
            let overlap = (rho - d).max(0.0) + (rho - (1.0 - d)).max(0.0);
            if m == idx {
                inter *= overlap;
            } else {
                // complement of the union of the two displaced arcs
                inter *= 1.0 - (2.0 * rho - overlap);
            }
        }
        Ok(2.0 * (self.measure_ak(k)? - inter))
    }
}

/// One sample of the product space: a finite window of signs, the time-zero
/// circle coordinates, and the number of shifts applied so far.
///
/// Sign indices are in the current frame: after `shift(s)`, `sign(i)` reads
/// what was `sign(i + s)` before. Circle coordinates are recomputed from the
/// time-zero values and the integer shift count, so shifting is exactly
/// invertible.
#[derive(Debug, Clone)]
pub struct OmegaPoint {
    x0: Vec<f64>,
    alpha: Vec<f64>,
    t: i64,
    signs: Vec<i8>,
    /// Time-zero-frame index of `signs[0]`.
    lo: i64,
    rng: Option<ChaCha8Rng>,
}

fn draw_sign(rng: &mut impl Rng) -> i8 {
    if rng.gen::<bool>() {
        1
    } else {
        -1
    }
}

/// Draw a point from the product measure: i.i.d. fair signs over `window`
/// (time-zero frame) and i.i.d. uniform circle coordinates.
pub fn sample_point(
    rng: &mut impl Rng,
    sets: &SetSystem,
    window: std::ops::RangeInclusive<i64>,
) -> OmegaPoint {
    assert!(window.start() <= window.end(), "window must be nonempty");
    let x0: Vec<f64> = sets.alpha.iter().map(|_| rng.gen::<f64>()).collect();
    let lo = *window.start();
    let signs: Vec<i8> = window.map(|_| draw_sign(rng)).collect();
    OmegaPoint { x0, alpha: sets.alpha.clone(), t: 0, signs, lo, rng: None }
}

impl OmegaPoint {
    /// Deterministic point with explicit coordinates and a fixed sign window
    /// starting at time-zero index `lo`; used by enumeration oracles.
    pub fn fixed(x: Vec<f64>, sets: &SetSystem, signs: Vec<i8>, lo: i64) -> Result<OmegaPoint> {
        if x.len() != sets.alpha.len() {
            return Err(Error::InvalidFamily(format!(
                "need {} coordinates, got {}",
                sets.alpha.len(),
                x.len()
            )));
        }
        if x.iter().any(|v| !(0.0..1.0).contains(v)) || signs.iter().any(|&s| s != 1 && s != -1) {
            return Err(Error::InvalidFamily("coordinates in [0,1), signs in {-1,+1}".into()));
        }
        Ok(OmegaPoint { x0: x, alpha: sets.alpha.clone(), t: 0, signs, lo, rng: None })
    }

    /// Hand over a dedicated stream so out-of-window reads extend the window
    /// with fresh signs instead of failing.
    pub fn attach_rng(&mut self, rng: ChaCha8Rng) {
        self.rng = Some(rng);
    }

    /// Overwrite the sign at current-frame index `i`; the window must cover
    /// it. Used by marginalization oracles to sweep sign assignments.
    pub fn set_sign(&mut self, i: i64, v: i8) -> Result<()> {
        let abs = i + self.t;
        let hi = self.lo + self.signs.len() as i64 - 1;
        if abs < self.lo || abs > hi || (v != 1 && v != -1) {
            return Err(Error::OutOfWindow { index: i });
        }
        self.signs[(abs - self.lo) as usize] = v;
        Ok(())
    }

    /// Force the sign at current-frame index `i` to `v`, growing the window
    /// if needed (gap entries are set to +1). Test plumbing for porting a
    /// sparse sign assignment onto a point.
    pub fn ensure_sign(&mut self, i: i64, v: i8) {
        let abs = i + self.t;
        let hi = self.lo + self.signs.len() as i64 - 1;
        if abs > hi {
            self.signs.resize((abs - self.lo + 1) as usize, 1);
        } else if abs < self.lo {
            let mut grown = vec![1i8; (self.lo - abs) as usize];
            grown.extend_from_slice(&self.signs);
            self.signs = grown;
            self.lo = abs;
        }
        self.signs[(abs - self.lo) as usize] = v;
    }

    pub fn time(&self) -> i64 {
        self.t
    }

    /// Apply the shift `steps` times (negatives invert).
    pub fn shift(&mut self, steps: i64) {
        self.t += steps;
    }

    /// Current-frame circle coordinate, `x0_k + t * alpha_k mod 1`.
    pub fn x_k(&self, k: u32) -> f64 {
        let idx = (k - 1) as usize;
        (self.x0[idx] + self.t as f64 * self.alpha[idx]).rem_euclid(1.0)
    }

    /// Current-frame sign `e_i`; extends the window when an rng is attached.
    pub fn sign(&mut self, i: i64) -> Result<i8> {
        let abs = i + self.t;
        let hi = self.lo + self.signs.len() as i64 - 1;
        if abs < self.lo || abs > hi {
            let Some(rng) = self.rng.as_mut() else {
                return Err(Error::OutOfWindow { index: i });
            };
            if abs > hi {
                for _ in hi..abs {
                    self.signs.push(draw_sign(rng));
                }
            } else {
                let mut prefix: Vec<i8> = (abs..self.lo).map(|_| draw_sign(rng)).collect();
                prefix.reverse();
                prefix.extend_from_slice(&self.signs);
                self.signs = prefix;
                self.lo = abs;
            }
        }
        Ok(self.signs[(abs - self.lo) as usize])
    }

    /// `1_{A_k}` at the current time: in arc `k`, outside every higher arc.
    pub fn indicator_ak(&self, k: u32, sets: &SetSystem) -> Result<u8> {
        sets.check_k(k)?;
        if self.x_k(k) >= sets.rho[(k - 1) as usize] {
            return Ok(0);
        }
        for j in k + 1..=sets.k_max() {
            if self.x_k(j) < sets.rho[(j - 1) as usize] {
                return Ok(0);
            }
        }
        Ok(1)
    }

    /// Largest `k` whose arc contains the current coordinates, if any: the
    /// unique `k` with `1_{A_k} = 1`.
    pub fn active_k(&self, sets: &SetSystem) -> Option<u32> {
        (1..=sets.k_max()).rev().find(|&k| self.x_k(k) < sets.rho[(k - 1) as usize])
    }
}
