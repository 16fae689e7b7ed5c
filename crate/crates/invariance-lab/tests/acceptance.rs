//! End-to-end acceptance gate. Each test prints exactly one `PASS`/`FAIL`
//! line (visible with `cargo test --test acceptance -- --nocapture`) and
//! asserts the same condition, so a red line is also a red test.

use std::time::Instant;

use invariance_lab::criteria::{criteria_table, mc_l1_series_term, mw_inner_sum, theorem_row};
use invariance_lab::estimator::{
    bnk_second_moment_closed, bnk_second_moment_enumerated, brute_force_oracle, empirical_clt,
    exact_mean_abs_rademacher, max_transfer_ratio, mc_estimate, ModelSpec, OracleFunctional,
    StatId,
};
use invariance_lab::family::{GeomPolyTerm, Preset, SequenceFamily};
use invariance_lab::realization::{HorizonRule, SetSystem};

fn report(id: u32, desc: &str, pass: bool, detail: &str, elapsed: f64, budget: f64) {
    let tag = if pass && elapsed <= budget { "PASS" } else { "FAIL" };
    println!("[{tag}] {id:>2} {desc}: {detail} ({elapsed:.2}s, budget {budget:.1}s)");
    assert!(pass, "{desc}: {detail}");
    assert!(elapsed <= budget, "{desc}: took {elapsed:.2}s, budget {budget:.1}s");
}

/// Criterion 1: The four presets reproduce their expected verdict rows exactly.
#[test]
fn c01_preset_verdict_table() {
    let t0 = Instant::now();
    let mut detail = String::new();
    let mut pass = true;
    for p in Preset::ALL {
        let family = SequenceFamily::preset(p, 6);
        let row = theorem_row(p);
        match criteria_table(&family, Some(&row)) {
            Ok(_) => detail.push_str(&format!("{} ok; ", p.name())),
            Err(e) => {
                pass = false;
                detail.push_str(&format!("{} MISMATCH ({e}); ", p.name()));
            }
        }
    }
    report(1, "preset verdict table", pass, detail.trim_end(), t0.elapsed().as_secs_f64(), 1.0);
}

/// Criterion 2: The ce1 first-moment series diverges: its partial sum is harmonic and
/// exceeds 9.0 by K = 10^4.
#[test]
fn c02_ce1_divergence_witness() {
    let t0 = Instant::now();
    let term = mc_l1_series_term(&SequenceFamily::preset(Preset::Ce1, 6));
    let sum: f64 = (1..=10_000u32).map(|k| term.eval(k).unwrap()).sum();
    report(
        2,
        "ce1 first-moment partial sum",
        sum > 9.0,
        &format!("sum_1e4 = {sum:.4} > 9.0"),
        t0.elapsed().as_secs_f64(),
        0.1,
    );
}

/// Criterion 3: Growth of the inner sum S(n): ce1/ce2 track sqrt(n) within a factor of
/// 10 across n = 2^10..2^20, while ce3 has S(n) ln^2 n / n pinned to a
/// positive constant within +-50%.
#[test]
fn c03_inner_sum_growth() {
    let t0 = Instant::now();
    let grid: Vec<u64> = (10..=20).map(|e| 1u64 << e).collect();
    let mut detail = String::new();
    let mut pass = true;
    for p in [Preset::Ce1, Preset::Ce2] {
        let family = SequenceFamily::preset(p, 6);
        let ratios: Vec<f64> = grid
            .iter()
            .map(|&n| mw_inner_sum(&family, n).unwrap() / (n as f64).sqrt())
            .collect();
        let (lo, hi) = (ratios.iter().cloned().fold(f64::MAX, f64::min), ratios.iter().cloned().fold(0.0, f64::max));
        let ok = lo > 0.0 && hi / lo < 10.0;
        pass &= ok;
        detail.push_str(&format!("{} S(n)/sqrt(n) spread {:.2}; ", p.name(), hi / lo));
    }
    let ce3 = SequenceFamily::preset(Preset::Ce3, 6);
    let scaled: Vec<f64> = grid
        .iter()
        .map(|&n| {
            let ln = (n as f64).ln();
            mw_inner_sum(&ce3, n).unwrap() * ln * ln / n as f64
        })
        .collect();
    let (lo, hi) = (scaled.iter().cloned().fold(f64::MAX, f64::min), scaled.iter().cloned().fold(0.0, f64::max));
    // +-50% around a common constant caps max/min at 3
    let ok = lo > 0.0 && hi / lo <= 3.0;
    pass &= ok;
    detail.push_str(&format!("ce3 S(n)ln^2(n)/n in [{lo:.3}, {hi:.3}]"));
    report(3, "inner sum growth", pass, &detail, t0.elapsed().as_secs_f64(), 5.0);
}

/// Criterion 4: Set-system exactness for every preset up to k = 8: measures inside the
/// [a rho_k, rho_k] band and shifted symmetric differences within eps_k out
/// to the full horizon.
#[test]
fn c04_set_system_budgets() {
    let t0 = Instant::now();
    let mut pass = true;
    let mut detail = String::new();
    let mut worst = 0.0f64;
    for p in Preset::ALL {
        let family = SequenceFamily::preset(p, 8);
        let rule = if family.variant() { HorizonRule::Double } else { HorizonRule::Standard };
        let sets = SetSystem::build_sets(&family, 8, rule).unwrap();
        let a = family.a();
        for k in 1..=8u32 {
            let rho = family.rho_k(k);
            let mu = sets.measure_ak(k).unwrap();
            pass &= a * rho <= mu && mu <= rho;
            let h = sets.horizon_k(k).unwrap();
            let eps = sets.eps_k(k).unwrap();
            // the displacement |i - j| alpha_k is what drives the symmetric
            // difference, so sweep it from 0 to its maximum h
            for d in [1, h / 7, h / 3, h / 2, (3 * h) / 4, h] {
                for (i, j) in [(0, d), (d, 0), (h - d, h)] {
                    let s = sets.symmdiff_exact(k, i, j).unwrap();
                    worst = worst.max(s / eps);
                    pass &= s <= eps;
                }
            }
        }
        detail.push_str(&format!("{} ok; ", p.name()));
    }
    detail.push_str(&format!("worst symmdiff/eps = {worst:.3}"));
    report(4, "set-system measure and shift budgets", pass, &detail, t0.elapsed().as_secs_f64(), 5.0);
}

/// Criterion 5: Enumeration oracle on a hand-sized instance: one arc of length 1/4
/// rotated by alpha = 0.001 gives E|I_2| = rho + alpha = 0.251 exactly.
#[test]
fn c05_oracle_tiny_instance() {
    let t0 = Instant::now();
    let family = SequenceFamily::new(
        GeomPolyTerm::new(1.0, 0.25, 0.0).unwrap(),
        GeomPolyTerm::new(2.0, 1.0, 0.0).unwrap(),
        GeomPolyTerm::new(1.0, 1.0, 0.0).unwrap(),
        0.25,
        false,
        1,
    )
    .unwrap();
    let sets = SetSystem::custom(vec![0.25], vec![0.001], vec![2]).unwrap();
    let spec = ModelSpec::with_sets(family, sets, HorizonRule::Standard).unwrap();
    let oracle =
        brute_force_oracle(&spec, OracleFunctional::AbsIn(2), 100_000, -2..=0).unwrap();
    let err = (oracle.value - 0.251).abs();
    report(
        5,
        "tiny-instance oracle E|I_2|",
        err <= 1e-3,
        &format!("value {:.6}, closed form 0.251, |err| {:.2e}, grid bound {:.2e}", oracle.value, err, oracle.bound),
        t0.elapsed().as_secs_f64(),
        2.0,
    );
}

/// Criterion 6: Monte Carlo E f^2 on ce1 (k_max = 5) agrees with the exact value
/// sum theta_k^2 mu(A_k), itself inside [0.178, 0.268].
#[test]
fn c06_norm_f2_matches_exact() {
    let t0 = Instant::now();
    let family = SequenceFamily::preset(Preset::Ce1, 5);
    let spec = ModelSpec::default_for(family, 5).unwrap();
    let exact: f64 = (1..=5u32)
        .map(|k| {
            let th = spec.family().theta_k(k).unwrap();
            th * th * spec.sets().measure_ak(k).unwrap()
        })
        .sum();
    let est = mc_estimate(StatId::NormF2, &spec, 1, 100_000, 11).unwrap();
    let in_band = (0.178..=0.268).contains(&exact);
    let agrees = (est.mean - exact).abs() <= 3.0 * est.stderr;
    report(
        6,
        "E f^2 Monte Carlo vs exact",
        in_band && agrees,
        &format!("exact {:.4} in [0.178, 0.268]: {in_band}; estimate {:.4} +- {:.4}", exact, est.mean, est.stderr),
        t0.elapsed().as_secs_f64(),
        10.0,
    );
}

/// Criterion 7: Closed-form E|sum of N signs| equals full 2^N enumeration for N <= 20.
#[test]
fn c07_mean_abs_sign_sum() {
    let t0 = Instant::now();
    let mut worst = 0.0f64;
    for n in 1..=20u32 {
        let closed = exact_mean_abs_rademacher(n).unwrap();
        let mut acc = 0.0f64;
        for pattern in 0u64..1 << n {
            let s = 2 * pattern.count_ones() as i64 - n as i64;
            acc += s.abs() as f64;
        }
        let brute = acc / (1u64 << n) as f64;
        worst = worst.max((closed - brute).abs());
    }
    report(
        7,
        "E|sign sum| closed form vs enumeration",
        worst <= 1e-10,
        &format!("max |diff| over N <= 20: {worst:.2e}"),
        t0.elapsed().as_secs_f64(),
        5.0,
    );
}

/// Criterion 8: Distributional check: for each preset at k_max = 6, the studentized
/// S_4096 over 4000 samples stays within KS distance 0.05 of the standard
/// normal, allowing one reseeded retry.
#[test]
fn c08_studentized_partial_sums() {
    let t0 = Instant::now();
    let mut pass = true;
    let mut detail = String::new();
    for p in Preset::ALL {
        let family = SequenceFamily::preset(p, 6);
        let spec = ModelSpec::default_for(family, 6).unwrap();
        let first = empirical_clt(&spec, 4096, 4000, 1).unwrap();
        let (ks, seed) = if first.ks_distance < 0.05 {
            (first.ks_distance, 1)
        } else {
            let second = empirical_clt(&spec, 4096, 4000, 2).unwrap();
            (second.ks_distance, 2)
        };
        pass &= ks < 0.05;
        detail.push_str(&format!("{} ks={ks:.3} (seed {seed}); ", p.name()));
    }
    report(8, "KS distance of studentized S_n", pass, detail.trim_end(), t0.elapsed().as_secs_f64(), 60.0);
}

/// Criterion 9: With the extended horizon rule on ce3, the median of
/// max_i |g T^i| / sqrt(n) does not increase (10% slack) as n grows.
#[test]
fn c09_transfer_ratio_shrinks() {
    let t0 = Instant::now();
    let family = SequenceFamily::preset(Preset::Ce3, 6);
    let spec = ModelSpec::new(family, 6, HorizonRule::IpExtended { n_max: 4096 }).unwrap();
    let medians: Vec<f64> = [256u64, 1024, 4096]
        .iter()
        .map(|&n| max_transfer_ratio(&spec, n, 800, 5).unwrap().median)
        .collect();
    let pass = medians.windows(2).all(|w| w[1] <= 1.1 * w[0]);
    report(
        9,
        "max |g T^i| / sqrt(n) median",
        pass,
        &format!("medians at n=256,1024,4096: {:.4}, {:.4}, {:.4}", medians[0], medians[1], medians[2]),
        t0.elapsed().as_secs_f64(),
        60.0,
    );
}

/// Criterion 10: E m^2 and E (g T - g)^2 on ce3 are stable within 20% as k_max moves
/// through 4, 6, 8: late blocks contribute negligibly.
#[test]
fn c10_second_moments_stable_in_kmax() {
    let t0 = Instant::now();
    let mut pass = true;
    let mut detail = String::new();
    for stat in [StatId::MartL2, StatId::TransferIncL2] {
        let means: Vec<f64> = [4u32, 6, 8]
            .iter()
            .map(|&km| {
                let family = SequenceFamily::preset(Preset::Ce3, km);
                let spec = ModelSpec::default_for(family, km).unwrap();
                mc_estimate(stat, &spec, 1, 4000, 7).unwrap().mean
            })
            .collect();
        let (lo, hi) = (means.iter().cloned().fold(f64::MAX, f64::min), means.iter().cloned().fold(0.0, f64::max));
        let ok = lo > 0.0 && hi <= 1.2 * lo;
        pass &= ok;
        detail.push_str(&format!("{} at k_max 4,6,8: {:.4}, {:.4}, {:.4}; ", stat.name(), means[0], means[1], means[2]));
    }
    report(10, "block-sum second moments stable in k_max", pass, detail.trim_end(), t0.elapsed().as_secs_f64(), 60.0);
}

/// Criterion 11: Closed-form E|B_n^k|^2 equals full sign enumeration for N_k <= 3,
/// n <= 8.
#[test]
fn c11_block_second_moment() {
    let t0 = Instant::now();
    let mut worst = 0.0f64;
    for n_k in 1..=3u64 {
        for n in 1..=8u64 {
            let closed = bnk_second_moment_closed(n as f64, n_k as f64);
            let brute = bnk_second_moment_enumerated(n, n_k).unwrap();
            worst = worst.max((closed - brute).abs());
        }
    }
    report(
        11,
        "E|B_n^k|^2 closed form vs enumeration",
        worst <= 1e-10,
        &format!("max |diff| over N_k <= 3, n <= 8: {worst:.2e}"),
        t0.elapsed().as_secs_f64(),
        1.0,
    );
}
