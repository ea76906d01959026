//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Runs without the libtest harness so the report lines always reach stdout.
//! Exits non-zero if any criterion fails.

mod common;

use std::io::Write;
use std::time::Instant;

use common::*;
use lattice::analysis::{matched_dual_sim, IdealLinearController};
use lattice::config::{NetworkConfig, PpoConfig, RunConfig, Strategy};
use lattice::envs::{EnvSpec, FlexExtParams, ReacherParams};
use lattice::exploration::{
    self, action_distribution, lattice_covariance, LatticeConfig, NoiseStdMatrices, Period,
};
use lattice::gauss::{min_eigenvalue, FullCovGaussian};
use lattice::policy::{GradientTape, NoiseParams};
use lattice::trainer::{collect_rollout, evaluate_agent, mean_sem, write_curve_csv, Agent, Trainer, VecEnv};
use lattice::Error;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn main() {
    let criteria: Vec<(&str, fn() -> Outcome)> = vec![
        ("1 latent/action acceleration variance ratio", variance_ratio),
        ("2 sampling path matches analytic distribution", distribution_correctness),
        ("3 log-density oracle and normalization", log_density_correctness),
        ("4 alpha = 0 reduces to gSDE", gsde_reduction),
        ("5 covariance bounded below by gamma", psd_guarantee),
        ("6 latent noise variance invariant to width", rescaling_invariance),
        ("7 analytic gradients match finite differences", gradient_fidelity),
        ("8 elbow solved by Lattice-PPO", desk_scale_learning),
        ("9 resampling period semantics", period_semantics),
        ("10 reacher energy, Lattice vs diagonal", reacher_energy),
    ];
    let only: Option<String> = std::env::args().nth(1).filter(|a| !a.starts_with('-'));
    let mut failed = 0;
    let mut out = std::io::stdout().lock();
    for (name, f) in criteria {
        if let Some(o) = &only {
            if !name.starts_with(&format!("{o} ")) {
                continue;
            }
        }
        let t0 = Instant::now();
        let r = f();
        failed += usize::from(!r.pass);
        writeln!(
            out,
            "{} criterion {name}: {} ({:.1}s)",
            if r.pass { "PASS" } else { "FAIL" },
            r.detail,
            t0.elapsed().as_secs_f64()
        )
        .unwrap();
        out.flush().unwrap();
    }
    if failed > 0 {
        writeln!(out, "{failed} criterion(s) failed").unwrap();
        std::process::exit(1);
    }
}

fn variance_ratio() -> Outcome {
    let params = FlexExtParams {
        target_range: 0.2,
        ..FlexExtParams::default()
    };
    let ctrl = IdealLinearController {
        n_flexors: 1,
        n_extensors: 1,
        sigma: 0.05,
    };
    let r = matched_dual_sim(&EnvSpec::FlexExt(params), &ctrl, 1_000_000, 1).unwrap();
    let ratio = r.accel_variance_ratio;
    outcome(
        (ratio - 2.0).abs() <= 0.1,
        format!(
            "V[latent]/V[action] = {ratio:.4} (target 2 ± 5%), matched per-action std {:?}",
            r.action.sigma_match
        ),
    )
}

fn distribution_correctness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let n_draws = 1_000_000;
    let mut worst_mean = 0.0f64;
    let mut worst_cov = 0.0f64;
    for _ in 0..50 {
        let n_x = rng.random_range(2..=6);
        let n_a = rng.random_range(2..=5);
        let w = random_matrix(n_a, n_x, &mut rng);
        let x = random_vector(n_x, &mut rng);
        let cfg = LatticeConfig {
            alpha: rng.random_range(0.0..1.0),
            gamma: 0.0,
            ..LatticeConfig::default()
        };
        let s_x = random_std(n_x, n_x, -1.5, 0.0, &mut rng);
        let s_a = random_std(n_a, n_x, -1.5, 0.0, &mut rng);
        let std = exploration::EffectiveStd {
            dist_x: s_x.clone(),
            dist_a: s_a.clone(),
            sample_x: s_x,
            sample_a: s_a,
        };
        let dist = action_distribution(&x, &w, &std, &cfg).unwrap();

        let mut sum = DVector::zeros(n_a);
        let mut outer = DMatrix::zeros(n_a, n_a);
        for _ in 0..n_draws {
            let p = exploration::resample_perturbations(&std.sample_x, &std.sample_a, true, &mut rng);
            let a = exploration::perturbed_action(&x, &w, &p, cfg.alpha).unwrap();
            sum += &a;
            outer.ger(1.0, &a, &a, 1.0);
        }
        let n = n_draws as f64;
        let mean = sum / n;
        let cov = (outer - &mean * mean.transpose() * n) / (n - 1.0);
        worst_mean = worst_mean.max((&mean - dist.mean()).norm() / dist.mean().norm());
        worst_cov = worst_cov.max((&cov - dist.cov()).norm() / dist.cov().norm());
    }
    outcome(
        worst_mean < 0.02 && worst_cov < 0.02,
        format!("worst relative Frobenius error: mean {worst_mean:.2e}, covariance {worst_cov:.2e} (limit 2e-2)"),
    )
}

fn log_density_correctness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let n_x = rng.random_range(1..=6);
        let n_a = rng.random_range(1..=6);
        let w = random_matrix(n_a, n_x, &mut rng);
        let x = random_vector(n_x, &mut rng);
        let s_x = random_std(n_x, n_x, -1.0, 0.5, &mut rng);
        let s_a = random_std(n_a, n_x, -1.0, 0.5, &mut rng);
        let alpha = rng.random_range(0.0..1.0);
        let cov = lattice_covariance(&x, &w, &s_x, &s_a, alpha, 1e-3).unwrap();
        let mean = random_vector(n_a, &mut rng);
        let g = FullCovGaussian::new(mean.clone(), cov.clone()).unwrap();
        let a = &mean + random_vector(n_a, &mut rng);
        let diff = (g.log_density(&a).unwrap() - direct_log_density(&mean, &cov, &a)).abs();
        worst = worst.max(diff);
    }

    // 1-D: σ = 0.7; 2-D: a Lattice covariance with strong correlation.
    let g1 = FullCovGaussian::new(DVector::from_element(1, 0.3), DMatrix::from_element(1, 1, 0.49)).unwrap();
    let mass1: f64 = simpson_nodes(0.3 - 10.0, 0.3 + 10.0, 4000)
        .iter()
        .map(|(t, wt)| wt * g1.log_density(&DVector::from_element(1, *t)).unwrap().exp())
        .sum();
    let w = DMatrix::from_row_slice(2, 2, &[1.0, 0.2, 0.9, -0.1]);
    let x = DVector::from_column_slice(&[0.8, -0.5]);
    let s = DMatrix::from_element(2, 2, 0.5);
    let cov = lattice_covariance(&x, &w, &s, &s, 1.0, 1e-3).unwrap();
    let mean = DVector::from_column_slice(&[0.1, -0.2]);
    let g2 = FullCovGaussian::new(mean.clone(), cov.clone()).unwrap();
    let half = 10.0 * cov.diagonal().max().sqrt();
    let xs = simpson_nodes(mean[0] - half, mean[0] + half, 800);
    let ys = simpson_nodes(mean[1] - half, mean[1] + half, 800);
    let mut mass2 = 0.0;
    for (a, wa) in &xs {
        for (b, wb) in &ys {
            mass2 += wa * wb * g2.log_density(&DVector::from_column_slice(&[*a, *b])).unwrap().exp();
        }
    }
    let pass = worst <= 1e-8 && (mass1 - 1.0).abs() <= 1e-4 && (mass2 - 1.0).abs() <= 1e-4;
    outcome(
        pass,
        format!(
            "max |log π − direct inverse| = {worst:.2e} (limit 1e-8); 1-D mass {mass1:.8}, 2-D mass {mass2:.8} (1 ± 1e-4)"
        ),
    )
}

fn tiny_run(strategy: Strategy, alpha: f64) -> RunConfig {
    RunConfig {
        env: EnvSpec::FlexExt(FlexExtParams::elbow()),
        strategy,
        lattice: LatticeConfig {
            alpha,
            period: Period::Steps(4),
            ..LatticeConfig::default()
        },
        ppo: PpoConfig {
            learning_rate: 3e-4,
            n_steps: 64,
            batch_size: 64,
            n_epochs: 3,
            ..PpoConfig::default()
        },
        network: NetworkConfig {
            policy_hidden: vec![16, 16],
            value_hidden: vec![16, 16],
            ..NetworkConfig::default()
        },
        seed: 11,
        total_env_steps: 2_048,
        n_envs: 4,
        ..RunConfig::default()
    }
}

fn gsde_reduction() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut max_off = 0.0f64;
    for _ in 0..100 {
        let (n_x, n_a) = (rng.random_range(1..=6), rng.random_range(2..=6));
        let cov = lattice_covariance(
            &random_vector(n_x, &mut rng),
            &random_matrix(n_a, n_x, &mut rng),
            &random_std(n_x, n_x, -1.0, 1.0, &mut rng),
            &random_std(n_a, n_x, -1.0, 1.0, &mut rng),
            0.0,
            0.0,
        )
        .unwrap();
        for i in 0..n_a {
            for j in 0..n_a {
                if i != j {
                    max_off = max_off.max(cov[(i, j)].abs());
                }
            }
        }
    }

    let train = |cfg: RunConfig| {
        let mut t = Trainer::new(cfg).unwrap();
        let rows = t.run(|_, _| Ok(())).unwrap();
        (write_curve_csv(&rows), t.agent.policy.to_flat())
    };
    let (curve_l, params_l) = train(tiny_run(Strategy::Lattice, 0.0));
    let (curve_g, params_g) = train(tiny_run(Strategy::Gsde, 1.0));
    let identical = curve_l == curve_g && params_l == params_g;
    outcome(
        max_off == 0.0 && identical,
        format!(
            "max |off-diagonal| at α=0: {max_off:e}; learning curves byte-identical: {} ({} bytes), final parameters identical: {}",
            curve_l == curve_g,
            curve_l.len(),
            params_l == params_g
        ),
    )
}

fn psd_guarantee() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst_gap = f64::INFINITY;
    for k in 0..10_000 {
        let (n_x, n_a) = (rng.random_range(1..=8), rng.random_range(1..=8));
        let x = if k % 10 == 0 {
            DVector::zeros(n_x)
        } else {
            random_vector(n_x, &mut rng)
        };
        let gamma = 10f64.powf(rng.random_range(-6.0..-1.0));
        let cov = lattice_covariance(
            &x,
            &(random_matrix(n_a, n_x, &mut rng) * 3.0),
            &random_std(n_x, n_x, -3.0, 2.0, &mut rng),
            &random_std(n_a, n_x, -3.0, 2.0, &mut rng),
            rng.random_range(0.0..1.0),
            gamma,
        )
        .unwrap();
        worst_gap = worst_gap.min(min_eigenvalue(&cov).unwrap() - gamma);
    }
    let cfg = LatticeConfig {
        gamma: 0.0,
        ..LatticeConfig::default()
    };
    let m = NoiseStdMatrices::new(4, 3, 0.0, true).effective(&cfg);
    let err = action_distribution(&DVector::zeros(4), &DMatrix::from_element(3, 4, 1.0), &m, &cfg);
    let raised = matches!(err, Err(Error::NotPositiveDefinite { .. }));
    outcome(
        worst_gap >= -1e-9 && raised,
        format!("min over instances of (λ_min − γ) = {worst_gap:.3e} (≥ −1e-9); γ=0, x=0 raises NotPositiveDefinite: {raised}"),
    )
}

fn rescaling_invariance() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let cfg = LatticeConfig::default();
    let mut vars = Vec::new();
    for n_x in [16usize, 64, 256] {
        let std = NoiseStdMatrices::new(n_x, 1, 0.0, true).effective(&cfg);
        let draws = 1_600_000usize.div_ceil(n_x);
        let (mut s, mut s2, mut count) = (0.0, 0.0, 0.0);
        for _ in 0..draws {
            let x = random_vector(n_x, &mut rng);
            let p = exploration::resample_perturbations(&std.sample_x, &std.sample_a, true, &mut rng);
            let z = exploration::latent_noise(&x, &p, 1.0);
            for v in z.iter() {
                s += v;
                s2 += v * v;
                count += 1.0;
            }
        }
        let mean = s / count;
        vars.push((n_x, s2 / count - mean * mean));
    }
    let reference = vars[0].1;
    let worst = vars.iter().map(|(_, v)| (v / reference - 1.0).abs()).fold(0.0, f64::max);
    outcome(
        worst <= 0.05,
        format!("per-component variance by N_x: {vars:?}; max relative spread {worst:.4} (limit 0.05)"),
    )
}

fn gradient_fidelity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst: f64 = 0.0;
    for inst in 0..20 {
        for stop in [false, true] {
            let cfg = LatticeConfig {
                alpha: rng.random_range(0.3..1.0),
                stop_variance_gradient: stop,
                full_std: inst % 2 == 0,
                ..LatticeConfig::default()
            };
            let mut agent = small_agent(3, &[5, 4], 3, Strategy::Lattice, &cfg, 100 + inst);
            let n = agent.policy.parameter_count();
            let flat: Vec<f64> = (0..n).map(|_| 0.5 * normal(&mut rng)).collect();
            agent.policy.load_flat(&flat).unwrap();
            if let NoiseParams::Matrices(m) = &mut agent.policy.noise {
                m.log_std_x = m.log_std_x.map(|_| rng.random_range(-1.0..0.5));
                m.log_std_a = m.log_std_a.map(|_| rng.random_range(-1.0..0.5));
            }
            let policy = agent.policy.clone();
            let obs: Vec<f64> = (0..3).map(|_| normal(&mut rng)).collect();
            let (x0, mean0) = policy.forward(&obs).unwrap();
            let action: Vec<f64> = mean0.iter().map(|m| m + 0.3 * normal(&mut rng)).collect();
            let a = DVector::from_column_slice(&action);
            let w0 = policy.head.weight.clone();

            let mut tape = GradientTape::for_policy(&policy);
            policy.log_prob_and_grad(&obs, &action, &cfg, &mut tape).unwrap();
            let analytic = tape.to_flat();

            let mut probe = policy.clone();
            let numeric = central_differences(&policy.to_flat(), 1e-5, |p| {
                probe.load_flat(p).unwrap();
                let (x, mean) = probe.forward(&obs).unwrap();
                let s = probe.effective_std(&cfg).unwrap();
                let (xv, wv) = if stop { (&x0, &w0) } else { (&x, &probe.head.weight) };
                let cov = brute_covariance(xv, wv, &s.dist_x, &s.dist_a, cfg.alpha, cfg.gamma);
                direct_log_density(&mean, &cov, &a)
            });
            worst = worst.max(relative_error(&analytic, &numeric));
        }
    }
    outcome(
        worst <= 1e-4,
        format!("worst ‖analytic − central difference‖ / ‖central difference‖ = {worst:.2e} over 40 cases (limit 1e-4)"),
    )
}

fn elbow_config(seed: u64) -> RunConfig {
    RunConfig {
        env: EnvSpec::FlexExt(FlexExtParams::elbow()),
        strategy: Strategy::Lattice,
        ppo: PpoConfig {
            learning_rate: 3e-4,
            batch_size: 256,
            entropy_coef: 0.0,
            ..PpoConfig::default()
        },
        network: NetworkConfig {
            policy_hidden: vec![64, 64],
            value_hidden: vec![64, 64],
            ..NetworkConfig::default()
        },
        seed,
        total_env_steps: 300_000,
        n_envs: 16,
        ..RunConfig::default()
    }
}

fn desk_scale_learning() -> Outcome {
    let mut solved = Vec::new();
    let mut steps = 0;
    for seed in 0..3 {
        let cfg = elbow_config(seed);
        let env = cfg.env.clone();
        let mut t = Trainer::new(cfg).unwrap();
        t.run(|_, _| Ok(())).unwrap();
        steps = t.env_steps;
        let eps = evaluate_agent(&t.agent, &env, 100, true, 1000 + seed).unwrap();
        solved.push(eps.iter().map(|e| e.solved_fraction).sum::<f64>() / eps.len() as f64);
    }
    let (m, s) = mean_sem(&solved);
    outcome(
        m >= 0.90,
        format!("solved fraction per seed {solved:.3?} after {steps} env steps; mean {m:.3} ± {s:.3} (need ≥ 0.90)"),
    )
}

fn frozen_agent(period: Period) -> Agent {
    let cfg = LatticeConfig {
        period,
        init_log_std: 0.5,
        ..LatticeConfig::default()
    };
    small_agent(2, &[8, 8], 4, Strategy::Lattice, &cfg, 9)
}

fn still_arm(max_steps: usize) -> EnvSpec {
    EnvSpec::FlexExt(FlexExtParams {
        n_flexors: 2,
        n_extensors: 2,
        gain: 0.0,
        max_steps,
        ..FlexExtParams::default()
    })
}

fn rollout_noise(agent: &Agent, spec: &EnvSpec, n_steps: usize) -> Vec<Vec<f64>> {
    let mut venv = VecEnv::new(spec, &[3]).unwrap();
    let buf = collect_rollout(agent, &mut venv, n_steps).unwrap();
    buf.data
        .iter()
        .map(|d| {
            let (_, mean) = agent.policy.forward(&d.obs).unwrap();
            d.action.iter().zip(mean.iter()).map(|(a, m)| a - m).collect()
        })
        .collect()
}

fn period_semantics() -> Outcome {
    let agent = frozen_agent(Period::Steps(4));
    let noise = rollout_noise(&agent, &still_arm(1000), 400);
    let mut windows_ok = true;
    for t in 1..noise.len() {
        let same = noise[t] == noise[t - 1];
        let all_differ = noise[t].iter().zip(&noise[t - 1]).all(|(a, b)| a != b);
        if (t % 4 != 0 && !same) || (t % 4 == 0 && !all_differ) {
            windows_ok = false;
        }
    }

    let agent = frozen_agent(Period::Steps(1));
    let noise = rollout_noise(&agent, &still_arm(200_000), 100_000);
    let mut worst_r: f64 = 0.0;
    for k in 0..noise[0].len() {
        let series: Vec<f64> = noise.iter().map(|v| v[k]).collect();
        let r = lattice::analysis::pearson(&series[..series.len() - 1], &series[1..]).unwrap();
        worst_r = worst_r.max(r.abs());
    }
    outcome(
        windows_ok && worst_r < 0.02,
        format!("T=4 noise constant on windows of exactly 4 steps: {windows_ok}; T=1 max |lag-1 r| = {worst_r:.4} over 1e5 steps (limit 0.02)"),
    )
}

fn reacher_config(strategy: Strategy, seed: u64) -> RunConfig {
    RunConfig {
        env: EnvSpec::Reacher(ReacherParams::default()),
        strategy,
        total_env_steps: 300_000,
        ..elbow_config(seed)
    }
}

fn reacher_energy() -> Outcome {
    let mut rows = Vec::new();
    for strategy in [Strategy::Lattice, Strategy::Diagonal] {
        let (mut energy, mut solved) = (Vec::new(), Vec::new());
        for seed in 0..3 {
            let cfg = reacher_config(strategy, seed);
            let env = cfg.env.clone();
            let mut t = Trainer::new(cfg).unwrap();
            t.run(|_, _| Ok(())).unwrap();
            let eps = evaluate_agent(&t.agent, &env, 100, false, 2000 + seed).unwrap();
            let n = eps.len() as f64;
            energy.push(eps.iter().map(|e| e.energy).sum::<f64>() / n);
            solved.push(eps.iter().map(|e| e.solved_fraction).sum::<f64>() / n);
        }
        rows.push((strategy, mean_sem(&energy), mean_sem(&solved)));
    }
    let (_, (e_l, se_l), (s_l, ss_l)) = rows[0];
    let (_, (e_d, se_d), (s_d, ss_d)) = rows[1];
    let tolerance = (ss_l * ss_l + ss_d * ss_d).sqrt();
    let pass = e_l < e_d && s_l >= s_d - tolerance;
    outcome(
        pass,
        format!(
            "energy lattice {e_l:.4} ± {se_l:.4} vs diagonal {e_d:.4} ± {se_d:.4}; solved lattice {s_l:.3} ± {ss_l:.3} vs diagonal {s_d:.3} ± {ss_d:.3} (stochastic evaluation, 3 seeds)"
        ),
    )
}
