//! Acceptance checks. Each criterion prints one PASS/FAIL line; the binary
//! exits non-zero if any criterion fails.

use std::process::ExitCode;
use std::time::Instant;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use insider_core::exec::{map_indexed, Execution};
use insider_core::experiments::{value_distribution, DistributionConfig};
use insider_core::market_data::{
    backtest, estimate_params, load_csv, ParamMode, RateSource, SigmaWindow, DEFAULT_STRATEGIES,
};
use insider_core::multiasset::{
    compare_values, mapo_partial_info, mapo_pi_bridge_or_forward, mapo_pi_skorokhod, mapo_value, numeric_maximize_j,
    MultiAssetParams, OracleConstraint, OracleSettings, Scheme,
};
use insider_core::paths::{bridge_cov, bridge_mean, sample_bridge_sequential, sample_brownian, BridgeSpec, TimeGrid};
use insider_core::rng::{NormalSource, PathRng};
use insider_core::strategies::ParamCurves;
use insider_core::strategies::{
    bridge_or_forward_pi_det, forward_pi_adapted, skorokhod_pi, Constraint, MarketParams, StrategyKind, StrategySpec,
};
use insider_core::valuation::{
    unconditional_forward, unconditional_forward_quadrature, unconditional_skorokhod,
    unconditional_skorokhod_quadrature, unconditional_skorokhod_standard, value_bb_or_forward_det,
    value_forward_adapted_truncated, value_forward_noshort, value_honest_noshort, value_skorokhod, SignalDistribution,
};
use insider_core::wealth::{
    mc_expected_log_utility, mc_unconditional_log_utility, skorokhod_log_wealth_explicit, skorokhod_terminal_wealth,
    MCConfig, MCEstimate,
};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn section_params() -> MarketParams {
    MarketParams::new(0.03, 0.02, 0.3, 1.0).unwrap()
}

/// Piecewise no-short forward value evaluated directly from its three cases.
fn forward_oracle(mu: f64, r: f64, sigma: f64, t: f64, b: f64) -> f64 {
    let theta = (mu - r) / sigma;
    if b <= -theta * t {
        r * t
    } else if b <= -theta * t + sigma * t {
        r * t + 0.5 * (theta + b / t).powi(2) * t
    } else {
        mu * t + sigma * b - 0.5 * sigma * sigma * t
    }
}

fn c1_spot_checks() -> Outcome {
    let p = section_params();
    // theta = 1/30; exact values by hand, then the printed 5-6 digit roundings.
    let theta = 1.0 / 30.0;
    let cases = [
        (
            "V_honest",
            value_honest_noshort(&p).unwrap().total,
            0.02 + 0.5 * theta * theta,
            0.0205556,
        ),
        (
            "V_fw(0.5)",
            value_forward_noshort(&p, 0.5).unwrap().total,
            forward_oracle(0.03, 0.02, 0.3, 1.0, 0.5),
            0.135,
        ),
        (
            "V_sk(0.5)",
            value_skorokhod(&p, 0.5).unwrap().total,
            0.02 + 0.01 + 0.3 * 0.5,
            0.18,
        ),
        (
            "V_fw(0.1)",
            value_forward_noshort(&p, 0.1).unwrap().total,
            0.02 + 0.5 * (theta + 0.1) * (theta + 0.1),
            0.028889,
        ),
    ];
    let mut pass = true;
    let mut parts = Vec::new();
    for (name, got, exact, printed) in cases {
        let exact_ok = (got - exact).abs() < 1e-9;
        // the printed value carries 6 decimals; it must agree to that rounding
        let printed_ok = (got - printed).abs() < 5e-7;
        pass &= exact_ok && printed_ok;
        parts.push(format!("{name}={got:.9}"));
    }
    outcome(pass, parts.join(" "))
}

fn c2_ordering() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut equal_cases = 0;
    let mut failures = 0;
    for i in 0..10_000 {
        let sigma = rng.random_range(0.05..1.0);
        let r = rng.random_range(-0.02..0.1);
        let mu = r + rng.random_range(1e-4..0.5);
        let t = rng.random_range(0.1..10.0);
        let p = MarketParams::new(mu, r, sigma, t).unwrap();
        let lower = -p.theta() * t;
        let b = match i % 4 {
            0 => lower,
            1 => lower - rng.random_range(0.0..3.0),
            2 => lower + rng.random_range(0.0..sigma * t),
            _ => lower + rng.random_range(0.0..3.0 * sigma * t + 3.0),
        };
        let fw = value_forward_noshort(&p, b).unwrap().total;
        let sk = value_skorokhod(&p, b).unwrap().total;
        let rt = r * t;
        let ok = if b <= lower {
            equal_cases += 1;
            sk == fw && fw == rt
        } else {
            let slack = 1e-15 * (1.0 + sk.abs());
            sk + slack >= fw && fw + slack >= rt && (b - lower < 1e-8 || sk > fw)
        };
        if !ok {
            failures += 1;
        }
    }
    outcome(
        failures == 0,
        format!("10000 draws, {equal_cases} on b<=-thetaT, {failures} violations"),
    )
}

fn c3_bridge_moments() -> Outcome {
    let n_paths = 100_000;
    let spec = BridgeSpec::new(1.0, 1.0).unwrap();
    let grid = TimeGrid::new(1.0, 64).unwrap();
    let probes: Vec<usize> = (1..=10).map(|k| k * 6).collect();
    let rows = map_indexed(n_paths, Execution::Auto, |i| {
        let mut rng = PathRng::new(3, i as u64);
        let path = sample_bridge_sequential(&spec, grid, &mut rng).unwrap();
        let v = path.values();
        (probes.iter().map(|&k| v[k]).collect::<Vec<_>>(), v[64])
    });
    let endpoint_exact = rows.iter().all(|(_, end)| *end == 1.0);
    let n = n_paths as f64;
    let m = probes.len();
    let means: Vec<f64> = (0..m)
        .map(|j| rows.iter().map(|(x, _)| x[j]).sum::<f64>() / n)
        .collect();
    let mut worst: f64 = 0.0;
    for j in 0..m {
        let t = grid.time(probes[j]);
        let var = rows.iter().map(|(x, _)| (x[j] - means[j]).powi(2)).sum::<f64>() / (n - 1.0);
        let z = (means[j] - bridge_mean(t, &spec).unwrap()).abs() / (var / n).sqrt();
        worst = worst.max(z);
        for k in j..m {
            let s = grid.time(probes[k]);
            let prods: Vec<f64> = rows
                .iter()
                .map(|(x, _)| (x[j] - means[j]) * (x[k] - means[k]))
                .collect();
            let cov = prods.iter().sum::<f64>() / (n - 1.0);
            let var_prod = prods.iter().map(|q| (q - cov).powi(2)).sum::<f64>() / (n - 1.0);
            let z = (cov - bridge_cov(t, s, &spec).unwrap()).abs() / (var_prod / n).sqrt();
            worst = worst.max(z);
        }
    }
    outcome(
        endpoint_exact && worst < 4.0,
        format!("10 means + 55 covariances, worst deviation {worst:.2} SE, endpoint exact: {endpoint_exact}"),
    )
}

fn c4_mc_vs_closed_form() -> Outcome {
    let p = section_params();
    let cfg = MCConfig {
        n_paths: 100_000,
        master_seed: 4,
        grid: TimeGrid::new(1.0, 256).unwrap(),
    };
    let check = |name: &str, est: MCEstimate, cf: f64| {
        let diff = (est.mean - cf).abs();
        let ok = diff < 3.0 * est.std_error + 5e-4;
        (
            ok,
            format!("{name}: mc={:.6} se={:.1e} cf={cf:.6}", est.mean, est.std_error),
        )
    };
    let honest = StrategySpec::no_short(StrategyKind::Honest);
    let forward = StrategySpec::no_short(StrategyKind::ForwardDeterministic);
    let sn = SignalDistribution::new(0.0, p.horizon).unwrap();
    let results = [
        check(
            "honest",
            mc_unconditional_log_utility(&honest, &p, &cfg, Execution::Auto).unwrap(),
            value_honest_noshort(&p).unwrap().total,
        ),
        check(
            "forward b=W_T",
            mc_unconditional_log_utility(&forward, &p, &cfg, Execution::Auto).unwrap(),
            unconditional_forward(&p, &sn).unwrap(),
        ),
        check(
            "forward b=0.1",
            mc_expected_log_utility(&forward, &p, 0.1, &cfg, Execution::Auto).unwrap(),
            value_forward_noshort(&p, 0.1).unwrap().total,
        ),
    ];
    let pass = results.iter().all(|(ok, _)| *ok);
    outcome(
        pass,
        results.iter().map(|(_, s)| s.as_str()).collect::<Vec<_>>().join("; "),
    )
}

fn c5_skorokhod_identity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst: f64 = 0.0;
    let mut path_gap: f64 = 0.0;
    for i in 0..100 {
        let sigma = rng.random_range(0.05..1.0);
        let r = rng.random_range(-0.02..0.1);
        let mu = rng.random_range(-0.1..0.3);
        let t = rng.random_range(0.1..5.0);
        let b = rng.random_range(-3.0..3.0);
        let p = MarketParams::new(mu, r, sigma, t).unwrap();
        let pi = skorokhod_pi(&p, b, Constraint::NoShort).unwrap();
        let log_w = skorokhod_terminal_wealth(&p, b, pi).ln();
        worst = worst.max((log_w - value_skorokhod(&p, b).unwrap().total).abs());
        let grid = TimeGrid::new(t, 32).unwrap();
        let w1 = sample_brownian(grid, &mut PathRng::new(50, i));
        let w2 = sample_brownian(grid, &mut PathRng::new(51, i));
        let e1 = skorokhod_log_wealth_explicit(&p, b, pi, &w1);
        let e2 = skorokhod_log_wealth_explicit(&p, b, pi, &w2);
        path_gap = path_gap.max((e1 - e2).abs()).max((e1 - log_w).abs());
    }
    outcome(
        worst < 1e-12 && path_gap < 1e-12,
        format!("100 draws, max |log X - V_sk| = {worst:.1e}, max path dependence {path_gap:.1e}"),
    )
}

fn c6_unconditional() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut worst_sk: f64 = 0.0;
    let mut worst_erf: f64 = 0.0;
    let mut worst_fw: f64 = 0.0;
    let mut ordered = true;
    let mut reference_case = f64::NAN;
    for i in 0..20 {
        let (p, d) = if i == 0 {
            (section_params(), SignalDistribution::new(0.0, 1.0).unwrap())
        } else {
            let sigma = rng.random_range(0.05..1.0);
            let r = rng.random_range(-0.02..0.1);
            let mu = rng.random_range(-0.1..0.3);
            let t = if i % 2 == 0 { 1.0 } else { rng.random_range(0.2..5.0) };
            let (mean, var) = if i % 2 == 0 {
                (0.0, 1.0)
            } else {
                (rng.random_range(-2.0..2.0), rng.random_range(0.1..4.0))
            };
            (
                MarketParams::new(mu, r, sigma, t).unwrap(),
                SignalDistribution::new(mean, var).unwrap(),
            )
        };
        let cf = unconditional_skorokhod(&p, &d).unwrap();
        let quad = unconditional_skorokhod_quadrature(&p, &d).unwrap();
        worst_sk = worst_sk.max((cf - quad).abs());
        if p.horizon == 1.0 && d.mean == 0.0 && d.variance == 1.0 {
            let erf_form = unconditional_skorokhod_standard(p.theta(), p.sigma, p.r);
            worst_erf = worst_erf.max((erf_form - quad).abs());
        }
        let fw = unconditional_forward_quadrature(&p, &d).unwrap();
        worst_fw = worst_fw.max((fw.closed_form - fw.quadrature).abs());
        ordered &= fw.quadrature < quad;
        if i == 0 {
            reference_case = quad;
        }
    }
    let pass = worst_sk < 1e-8 && worst_erf < 1e-8 && ordered && (reference_case - 0.144749).abs() < 5e-7;
    outcome(
        pass,
        format!(
            "20 draws: |cf-quad| sk {worst_sk:.1e}, erf form {worst_erf:.1e}, fw {worst_fw:.1e}; fw<sk all: {ordered}; theta=1/30 case {reference_case:.6}"
        ),
    )
}

fn c7_value_distribution() -> Outcome {
    let p = MarketParams::new(0.03, 0.0027, 0.3, 64.0).unwrap();
    let mut means = Vec::new();
    let mut lines = Vec::new();
    for e in [0.0, 0.5, 1.0] {
        let cfg = DistributionConfig {
            params: p,
            signal: SignalDistribution::new(e, 64.0).unwrap(),
            draws: 5000,
            seed: 7,
            steps: 64,
            s0: 100.0,
        };
        let res = value_distribution(&cfg, Execution::Auto).unwrap();
        lines.push(format!(
            "e={e}: mean fw {:.4} sk {:.4}, var fw {:.4} sk {:.4}, backtest mean fw {:.4} sk {:.4}",
            res.forward.mean,
            res.skorokhod.mean,
            res.forward.variance,
            res.skorokhod.variance,
            res.backtest_forward.mean,
            res.backtest_skorokhod.mean
        ));
        means.push((res.forward.mean, res.skorokhod.mean));
    }
    let sk_above = means.iter().all(|(fw, sk)| sk > fw);
    let increasing = means.windows(2).all(|w| w[1].0 > w[0].0 && w[1].1 > w[0].1);
    outcome(sk_above && increasing, lines.join("; "))
}

/// Volatility matrix `U diag(s) V'` with random orthogonal factors and
/// singular values in [0.1, 0.5].
fn random_sigma(d: usize, rng: &mut PathRng, unif: &mut ChaCha8Rng) -> DMatrix<f64> {
    let u = DMatrix::from_fn(d, d, |_, _| rng.next_normal()).qr().q();
    let v = DMatrix::from_fn(d, d, |_, _| rng.next_normal()).qr().q();
    let s = DMatrix::from_diagonal(&nalgebra::DVector::from_fn(d, |_, _| unif.random_range(0.1..0.5)));
    u * s * v.transpose()
}

fn random_instance(d: usize, seed: u64, mask: Vec<bool>, sigma: Option<DMatrix<f64>>) -> MultiAssetParams {
    let mut unif = ChaCha8Rng::seed_from_u64(seed);
    let mut normals = PathRng::new(seed, 1);
    let sigma = sigma.unwrap_or_else(|| random_sigma(d, &mut normals, &mut unif));
    let r = unif.random_range(0.0..0.05);
    let mu = (0..d).map(|_| r + unif.random_range(-0.05..0.15)).collect();
    let b = (0..d).map(|_| unif.random_range(-1.5..1.5)).collect();
    let t = unif.random_range(0.5..3.0);
    MultiAssetParams::new(mu, r, sigma, t, b, mask).unwrap()
}

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn c8_mapo_oracle() -> Outcome {
    let settings = OracleSettings::default();
    let dims = [2usize, 3, 5];
    let mut worst_full: f64 = 0.0;
    let mut worst_partial: f64 = 0.0;
    let mut worst_partial_sk: f64 = 0.0;
    let mut worst_coupled: f64 = 0.0;
    let mut floor_ok = true;
    let mut premise = 0;
    let mut counterexamples = Vec::new();
    let mut boxed_losses = 0;
    for i in 0..50u64 {
        let d = dims[i as usize % 3];
        let m = random_instance(d, 800 + i, vec![true; d], None);
        let bf = mapo_pi_bridge_or_forward(&m).unwrap().pi;
        let num = numeric_maximize_j(
            &m,
            Scheme::BridgeOrForward,
            false,
            OracleConstraint::Unconstrained,
            settings,
        )
        .unwrap();
        worst_full = worst_full.max(max_diff(&bf, &num.pi));
        let sk = mapo_pi_skorokhod(&m).pi;
        let num = numeric_maximize_j(&m, Scheme::Skorokhod, false, OracleConstraint::Box, settings).unwrap();
        worst_full = worst_full.max(max_diff(&sk, &num.pi));

        let cmp = compare_values(&m).unwrap();
        floor_ok &= cmp.skorokhod >= cmp.riskfree - 1e-12 && cmp.bridge_or_forward >= cmp.riskfree - 1e-12;
        let boxed_bf = numeric_maximize_j(&m, Scheme::BridgeOrForward, false, OracleConstraint::Box, settings).unwrap();
        if cmp.premise_holds {
            premise += 1;
            if !cmp.skorokhod_wins {
                counterexamples.push(i);
            }
            if cmp.skorokhod < m.to_file().horizon * boxed_bf.objective - 1e-12 {
                boxed_losses += 1;
            }
        }

        // partial information: alternate masks, never all or nothing
        let mask: Vec<bool> = (0..d).map(|j| (j + i as usize).is_multiple_of(2)).collect();
        let pm = m.clone().with_mask(mask.clone()).unwrap();
        let sol = mapo_partial_info(&pm, Scheme::BridgeOrForward).unwrap();
        let num = numeric_maximize_j(
            &pm,
            Scheme::BridgeOrForward,
            true,
            OracleConstraint::Unconstrained,
            settings,
        )
        .unwrap();
        worst_partial = worst_partial.max(max_diff(&sol.portfolio.pi, &num.pi));

        // Skorokhod partial: block-separable sigma gives an exact comparison
        let mut unif = ChaCha8Rng::seed_from_u64(900 + i);
        let mut normals = PathRng::new(900 + i, 2);
        let ins: Vec<usize> = (0..d).filter(|&j| mask[j]).collect();
        let outs: Vec<usize> = (0..d).filter(|&j| !mask[j]).collect();
        let bi = random_sigma(ins.len(), &mut normals, &mut unif);
        let bo = random_sigma(outs.len(), &mut normals, &mut unif);
        let mut sep = DMatrix::zeros(d, d);
        for (a, &ia) in ins.iter().enumerate() {
            for (b, &ib) in ins.iter().enumerate() {
                sep[(ia, ib)] = bi[(a, b)];
            }
        }
        for (a, &oa) in outs.iter().enumerate() {
            for (b, &ob) in outs.iter().enumerate() {
                sep[(oa, ob)] = bo[(a, b)];
            }
        }
        if let Ok(sm) = MultiAssetParams::new(
            pm_mu(&pm),
            0.01,
            sep,
            1.0,
            (0..d).map(|j| if j % 2 == 0 { 0.7 } else { -0.4 }).collect(),
            mask.clone(),
        ) {
            let sol = mapo_partial_info(&sm, Scheme::Skorokhod).unwrap();
            let num = numeric_maximize_j(&sm, Scheme::Skorokhod, true, OracleConstraint::InsiderBox, settings).unwrap();
            worst_partial_sk = worst_partial_sk.max(max_diff(&sol.portfolio.pi, &num.pi));
        }
        let sol = mapo_partial_info(&pm, Scheme::Skorokhod).unwrap();
        if let Ok(num) = numeric_maximize_j(&pm, Scheme::Skorokhod, true, OracleConstraint::InsiderBox, settings) {
            worst_coupled = worst_coupled.max(pm.to_file().horizon * num.objective - sol.value);
        }
    }

    // d = 1 reduction
    let mut rng = ChaCha8Rng::seed_from_u64(81);
    let mut worst_scalar: f64 = 0.0;
    for _ in 0..100 {
        let sigma = rng.random_range(0.05..1.0);
        let r = rng.random_range(0.0..0.05);
        let mu = r + rng.random_range(-0.05..0.2);
        let t = rng.random_range(0.2..4.0);
        let b = rng.random_range(-2.0..2.0);
        let p = MarketParams::new(mu, r, sigma, t).unwrap();
        let m = MultiAssetParams::new(vec![mu], r, DMatrix::from_element(1, 1, sigma), t, vec![b], vec![true]).unwrap();
        let diffs = [
            mapo_pi_bridge_or_forward(&m).unwrap().pi[0]
                - bridge_or_forward_pi_det(&p, b, Constraint::AllowShort).unwrap(),
            mapo_pi_skorokhod(&m).pi[0] - skorokhod_pi(&p, b, Constraint::NoShort).unwrap(),
            mapo_value(&m, Scheme::BridgeOrForward).unwrap()
                - value_bb_or_forward_det(&ParamCurves::constant(&p, 4).unwrap(), b),
            mapo_value(&m, Scheme::Skorokhod).unwrap() - value_skorokhod(&p, b).unwrap().total,
        ];
        for d in diffs {
            worst_scalar = worst_scalar.max(d.abs() / (1.0 + d.abs()));
        }
    }
    let pass = worst_full < 1e-6 && worst_partial < 1e-6 && worst_partial_sk < 1e-6 && worst_scalar < 1e-12 && floor_ok;
    outcome(
        pass,
        format!(
            "50 instances: full {worst_full:.1e}, partial bridge/forward {worst_partial:.1e}, partial Skorokhod {worst_partial_sk:.1e}, d=1 {worst_scalar:.1e}; \
             coupled Skorokhod partial value below oracle by up to {worst_coupled:.1e} (reported); \
             Skorokhod below unconstrained bridge/forward in {}/{premise} premise instances {:?}, \
             below box-constrained bridge/forward in {boxed_losses} (reported)",
            counterexamples.len(),
            counterexamples
        ),
    )
}

fn pm_mu(m: &MultiAssetParams) -> Vec<f64> {
    m.to_file().mu
}

fn c9_divergence() -> Outcome {
    let p = section_params();
    let b = 0.1;
    let t = p.horizon;
    let eps = 1e-4 * t;
    let slope = value_forward_adapted_truncated(&p, b, eps / 2.0).unwrap()
        - value_forward_adapted_truncated(&p, b, eps).unwrap();
    let half_ln2 = 0.5 * std::f64::consts::LN_2;
    let slope_ok = (slope - half_ln2).abs() < 1e-3;

    // MC at eps = 0.01 T: adapted forward on [0, T - eps]; the grid is fine
    // enough that the left-point bias (about 0.003) stays well inside 3 SE.
    let eps_mc = 1e-2 * t;
    let cfg = MCConfig {
        n_paths: 100_000,
        master_seed: 9,
        grid: TimeGrid::new(t - eps_mc, 8000).unwrap(),
    };
    let spec = StrategySpec::new(StrategyKind::ForwardAdapted, Constraint::AllowShort).unwrap();
    let est = mc_expected_log_utility(&spec, &p, b, &cfg, Execution::Auto).unwrap();
    let cf = value_forward_adapted_truncated(&p, b, eps_mc).unwrap();
    let mc_ok = (est.mean - cf).abs() < 3.0 * est.std_error;
    let _ = forward_pi_adapted;
    outcome(
        slope_ok && mc_ok,
        format!(
            "V(eps/2)-V(eps) at eps=1e-4 T: {slope:.6} vs {half_ln2:.6}; eps=1e-2 T: mc={:.5} se={:.1e} cf={cf:.5}",
            est.mean, est.std_error
        ),
    )
}

fn c10_backtest_fixture() -> Outcome {
    let root = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data");
    let series = load_csv(&root.join("two_step.csv")).unwrap();
    let expected: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(root.join("two_step_expected.json")).unwrap()).unwrap();
    let r = expected["r"].as_f64().unwrap();
    let est = estimate_params(&series, RateSource::Constant(r), 2, SigmaWindow::PerStep).unwrap();
    let res = backtest(&series, &est, &DEFAULT_STRATEGIES, ParamMode::Fixed).unwrap();
    let mut worst: f64 = 0.0;
    for st in &res.strategies {
        let want = expected["terminal_wealth"][st.kind.name()].as_f64().unwrap();
        worst = worst.max((st.terminal() - want).abs());
        let want_pi = expected["pi"][st.kind.name()].as_f64().unwrap();
        worst = worst.max((st.pi[0] - want_pi).abs());
    }
    worst = worst.max((res.implied_b - expected["implied_b"].as_f64().unwrap()).abs());
    worst = worst.max(
        (res.skorokhod_closed_form_terminal - expected["skorokhod_closed_form_terminal_wealth"].as_f64().unwrap())
            .abs(),
    );
    let mut rescale_gap: f64 = 0.0;
    for c in [0.01, 3.7, 1e6] {
        let scaled = series.rescaled(c).unwrap();
        let est_c = estimate_params(&scaled, RateSource::Constant(r), 2, SigmaWindow::PerStep).unwrap();
        let res_c = backtest(&scaled, &est_c, &DEFAULT_STRATEGIES, ParamMode::Fixed).unwrap();
        for (a, b) in res.strategies.iter().zip(&res_c.strategies) {
            for (x, y) in a.wealth.iter().zip(&b.wealth) {
                rescale_gap = rescale_gap.max((x - y).abs());
            }
        }
    }
    outcome(
        worst < 1e-12 && rescale_gap < 1e-12,
        format!("max deviation from hand values {worst:.1e}, rescaling gap {rescale_gap:.1e}"),
    )
}

fn main() -> ExitCode {
    type Criterion = (&'static str, fn() -> Outcome);
    let criteria: [Criterion; 10] = [
        ("closed-form spot checks", c1_spot_checks),
        ("Skorokhod >= forward >= rT ordering", c2_ordering),
        ("bridge sampler moments", c3_bridge_moments),
        ("Monte Carlo vs closed form", c4_mc_vs_closed_form),
        ("Skorokhod terminal wealth identity", c5_skorokhod_identity),
        ("unconditional expectations", c6_unconditional),
        ("value distribution under b ~ N(e, 64)", c7_value_distribution),
        ("multi-asset oracle equivalence", c8_mapo_oracle),
        ("adapted forward log divergence", c9_divergence),
        ("backtest fixture", c10_backtest_fixture),
    ];
    let only: Option<usize> = std::env::var("ACCEPTANCE_ONLY").ok().and_then(|s| s.parse().ok());
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        if only.is_some_and(|k| k != i + 1) {
            continue;
        }
        let start = Instant::now();
        let o = f();
        let tag = if o.pass { "PASS" } else { "FAIL" };
        println!(
            "[{tag}] {:>2}. {name} ({:.1}s): {}",
            i + 1,
            start.elapsed().as_secs_f64(),
            o.detail
        );
        if !o.pass {
            failed += 1;
        }
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}
