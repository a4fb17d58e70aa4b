//! Acceptance gate: one check per primary criterion, each printing a single
//! `[PASS]` / `[FAIL]` line with the measured numbers. Runs without the test
//! harness so every line is printed and every criterion runs; exits non-zero
//! if any fails. Free arguments filter checks by substring.

use std::time::Instant;

use rhm::dataset::generate_dataset;
use rhm::generator::{parse, sequence_probability};
use rhm::grammar::sample_grammar;
use rhm::inference::{bp_last_token_posterior, brute_force_posterior, ngram_ladder, ngram_loss, ObservationWindow};
use rhm::learner::{
    geometric_grid, sample_complexity_sweep, HierarchicalKeyer, HierarchicalPredictor, Mode, SweepConfig,
};
use rhm::params::{RhmParams, TreeNode};
use rhm::rng::{domain, stream_seed};
use rhm::statistics::{ensemble_correlation_variance, measure_sampling_noise, Observable};
use rhm::theory::{ngram_decay_fit, sample_complexity};

fn report(name: &str, pass: bool, detail: String) -> bool {
    println!("[{}] {name}: {detail}", if pass { "PASS" } else { "FAIL" });
    pass
}

fn bp_matches_enumeration() -> bool {
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    let mut windows = 0;
    for (v, m) in [(3, 2), (4, 3)] {
        let params = RhmParams::new(v, m, 2, 2, 11).unwrap();
        let g = sample_grammar(&params).unwrap();
        let data = generate_dataset(&g, 200, false, 5);
        for seq in data.sequences() {
            for n in 1..=seq.len() {
                let w = ObservationWindow::from_sequence(seq, n).unwrap();
                let bp = bp_last_token_posterior(&g, &w).unwrap();
                let bf = brute_force_posterior(&g, &w, u64::MAX).unwrap();
                for (a, b) in bp.probs().iter().zip(bf.probs()) {
                    worst = worst.max((a - b).abs());
                }
                windows += 1;
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    let ok = report(
        "bp-enumeration",
        worst <= 1e-10 && secs < 10.0,
        format!("max |diff| = {worst:.2e} over {windows} windows in {secs:.2} s (need <= 1e-10, < 10 s)"),
    );
    ok
}

fn generated_sequences_are_uniform_over_derivations() -> bool {
    let params = RhmParams::new(3, 2, 2, 2, 4).unwrap();
    let g = sample_grammar(&params).unwrap();
    let n = 1_000_000;
    let data = generate_dataset(&g, n, false, 9);
    let mut counts = std::collections::HashMap::new();
    for seq in data.sequences() {
        *counts.entry(seq.to_vec()).or_insert(0u64) += 1;
    }
    // every observed sequence parses, and its derivation has probability 1/24
    let mut expected_p = 0.0;
    for seq in counts.keys() {
        let tree = parse(&g, seq).unwrap();
        expected_p = sequence_probability(&g, &tree).unwrap();
    }
    let cells = counts.len();
    let expected = n as f64 * expected_p;
    let chi2: f64 = counts.values().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
    let dof = (cells - 1) as f64;
    let z = (chi2 - dof) / (2.0 * dof).sqrt();
    let ok = report(
        "generation-chi2",
        cells == 24 && (expected_p - 1.0 / 24.0).abs() < 1e-15 && z.abs() <= 4.0,
        format!("{cells} distinct sequences, chi2 = {chi2:.2} on {dof} dof, z = {z:.2} (need 24 cells, |z| <= 4)"),
    );
    ok
}

fn correlations_decay_with_tree_distance() -> bool {
    let params = RhmParams::new(16, 4, 2, 3, 21).unwrap();
    let near = Observable::NodePair(TreeNode::leaf(3, -1), TreeNode::leaf(3, -2));
    let far = Observable::NodePair(TreeNode::leaf(3, -1), TreeNode::leaf(3, -3));
    let a = ensemble_correlation_variance(&params, near, 200).unwrap();
    let b = ensemble_correlation_variance(&params, far, 200).unwrap();
    let decay = b.mean_square / a.mean_square;
    let target_decay = 1.0 / 16.0;
    let ok_a = (a.ratio - 1.0).abs() <= 0.25;
    let ok_b = (b.ratio - 1.0).abs() <= 0.25;
    let ok_decay = (decay / target_decay - 1.0).abs() <= 0.30;
    let ok = report(
        "correlation-decay",
        a.d_tree == 2 && b.d_tree == 4 && ok_a && ok_b && ok_decay,
        format!(
            "d=2 measured/target = {:.3}, d=4 measured/target = {:.3}, d4/d2 = {:.5} vs 1/m^2 = {:.5} (need 25%, 25%, 30%)",
            a.ratio, b.ratio, decay, target_decay
        ),
    );
    ok
}

fn sampling_noise_matches_prediction() -> bool {
    let params = RhmParams::new(16, 4, 2, 3, 31).unwrap();
    let noise = measure_sampling_noise(&params, 2, 10_000, 10, 10).unwrap();
    let ok = report(
        "sampling-noise",
        (noise.ratio - 1.0).abs() <= 0.20,
        format!(
            "variance = {:.4e} +- {:.1e}, predicted 1/((vm) v P) = {:.4e}, ratio {:.3} (need within 20%)",
            noise.variance, noise.stderr, noise.target, noise.ratio
        ),
    );
    ok
}

fn ngram_ladder_decays_geometrically() -> bool {
    let params = RhmParams::new(16, 4, 2, 4, 41).unwrap();
    let instances = 64;
    let test_size = 4096;
    let mut sums = vec![0.0; params.depth as usize + 1];
    let mut level0_exact = true;
    for k in 0..instances {
        let gseed = stream_seed(params.seed, domain::ENSEMBLE, k);
        let g = sample_grammar(&params.with_seed(gseed)).unwrap();
        let test = generate_dataset(&g, test_size, false, stream_seed(gseed, domain::TEST_SET, 0));
        let ladder = ngram_ladder(&g, &test).unwrap();
        level0_exact &= ladder[0].loss == 16f64.ln();
        for (acc, l) in sums.iter_mut().zip(&ladder) {
            *acc += l.loss;
        }
    }
    let mean: Vec<f64> = sums.iter().map(|s| s / instances as f64).collect();
    let decreasing = mean.windows(2).all(|w| w[1] < w[0]);
    let floor = *mean.last().unwrap();
    let fit = ngram_decay_fit(&mean, floor).unwrap();
    let f = params.f();
    let ok = report(
        "ngram-ladder",
        level0_exact && decreasing && fit.rate >= f / 2.0 && fit.rate <= 2.0 * f,
        format!(
            "L_0 = log 16 exactly: {level0_exact}, ladder {:?}, strictly decreasing: {decreasing}, decay rate {:.3} vs f = {f} (need [{:.3}, {:.3}])",
            mean.iter().map(|x| (x * 1e4).round() / 1e4).collect::<Vec<_>>(),
            fit.rate,
            f / 2.0,
            2.0 * f
        ),
    );
    ok
}

fn hierarchical_predictor_is_optimal_with_exact_reconstruction() -> bool {
    let params = RhmParams::new(16, 4, 2, 3, 51).unwrap();
    let g = sample_grammar(&params).unwrap();
    let train = generate_dataset(&g, 1 << 21, false, 1);
    let test = generate_dataset(&g, 1 << 15, false, 2);
    let keyer = HierarchicalKeyer::from_grammar(&g, Mode::Shared).unwrap();
    let pred = HierarchicalPredictor::fit(keyer, &train).unwrap();
    let ours = pred.evaluate(&test).unwrap();
    let bp = ngram_loss(&g, params.depth, &test).unwrap();
    let gap = ours.loss - bp.loss;
    let ok = report(
        "hierarchical-optimality",
        gap.abs() <= 2.0 * bp.stderr,
        format!(
            "held-out loss {:.5} vs BP {:.5} +- {:.5}, gap {:.5} (need |gap| <= 2 SE = {:.5}); {} backoffs",
            ours.loss,
            bp.loss,
            bp.stderr,
            gap,
            2.0 * bp.stderr,
            ours.backoffs
        ),
    );
    ok
}

fn sweep(m: u32) -> (f64, f64, i64, String) {
    let params = RhmParams::new(16, m, 2, 3, 61).unwrap();
    let p1 = sample_complexity(&params, 1, Mode::Positional).unwrap();
    let lo = (p1 / 4.0) as usize;
    // level 1 first; then extend the grid just past the largest P*(2) that
    // could still pass (2 m^2 P*(1)), so a lower bound at the top decides too
    let mut cfg = SweepConfig::new(&params, geometric_grid(lo, (p1 * 64.0) as usize));
    cfg.max_depth = 1;
    let first = sample_complexity_sweep(&params, &cfg).unwrap();
    let top = [Mode::Positional, Mode::Shared]
        .map(|mode| first.estimate(1, mode).unwrap().p_star)
        .into_iter()
        .max()
        .unwrap();
    let limit = 2.0 * (m * m) as f64 * top as f64 * 2f64.sqrt();
    cfg.grid = geometric_grid(lo, limit as usize);
    cfg.max_depth = 2;
    let r = sample_complexity_sweep(&params, &cfg).unwrap();
    let get = |l, mode| r.estimate(l, mode).unwrap();
    let pos = get(2, Mode::Positional).p_star as f64 / get(1, Mode::Positional).p_star as f64;
    let sh = get(2, Mode::Shared).p_star as f64 / get(1, Mode::Shared).p_star as f64;
    // grid points are rounded to integers, so compare grid indices, not ratios
    let index = |mode| cfg.grid.iter().position(|&x| x == get(1, mode).p_star).unwrap() as i64;
    let agree = (index(Mode::Positional) - index(Mode::Shared)).abs();
    let detail = format!(
        "m={m}: P*(1) pos {} shared {}, P*(2) pos {}{} shared {}{}",
        get(1, Mode::Positional).p_star,
        get(1, Mode::Shared).p_star,
        get(2, Mode::Positional).p_star,
        if get(2, Mode::Positional).lower_bound { " (lower bound)" } else { "" },
        get(2, Mode::Shared).p_star,
        if get(2, Mode::Shared).lower_bound { " (lower bound)" } else { "" },
    );
    (pos, sh, agree, detail)
}

fn sample_complexity_ratios_follow_theory() -> bool {
    let start = Instant::now();
    let mut ok = true;
    let mut details = Vec::new();
    for m in [4u32, 6] {
        let (pos, sh, agree, detail) = sweep(m);
        let mf = m as f64;
        let pos_ok = pos / (mf * mf) <= 2.0 && pos / (mf * mf) >= 0.5;
        let sh_ok = sh / mf <= 2.0 && sh / mf >= 0.5;
        let agree_ok = agree <= 1;
        ok &= pos_ok && sh_ok && agree_ok;
        details.push(format!(
            "{detail}; positional ratio {pos:.1} vs m^2 = {} [{}], shared ratio {sh:.1} vs m = {m} [{}], P*(1) pos vs shared {agree} grid steps apart [{}]",
            m * m,
            if pos_ok { "ok" } else { "off" },
            if sh_ok { "ok" } else { "off" },
            if agree_ok { "ok" } else { "off" },
        ));
    }
    let secs = start.elapsed().as_secs_f64();
    report(
        "sample-complexity-scaling",
        ok,
        format!("{} ({secs:.0} s)", details.join(" | ")),
    );
    ok
}

fn main() {
    let checks: [(&str, fn() -> bool); 7] = [
        ("bp_matches_enumeration", bp_matches_enumeration),
        ("generated_sequences_are_uniform_over_derivations", generated_sequences_are_uniform_over_derivations),
        ("correlations_decay_with_tree_distance", correlations_decay_with_tree_distance),
        ("sampling_noise_matches_prediction", sampling_noise_matches_prediction),
        ("ngram_ladder_decays_geometrically", ngram_ladder_decays_geometrically),
        ("hierarchical_predictor_is_optimal_with_exact_reconstruction", hierarchical_predictor_is_optimal_with_exact_reconstruction),
        ("sample_complexity_ratios_follow_theory", sample_complexity_ratios_follow_theory),
    ];
    let filters: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (name, check) in checks {
        if !filters.is_empty() && !filters.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        if !check() {
            failed += 1;
        }
    }
    if failed > 0 {
        println!("acceptance: {failed} criteria failed");
        std::process::exit(1);
    }
}
