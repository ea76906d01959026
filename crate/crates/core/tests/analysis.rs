mod common;

use common::*;
use lattice::analysis::{
    allocation_from_std, correlation_from_covariance, covariance_report, dual_sim_experiment, empirical_covariance,
    energy_distribution, explained_variance_curve, matched_dual_sim, noise_allocation, noise_structure,
    pca_explained_variance, read_matrix_csv, rollout_log, wilcoxon_signed_rank, write_matrix_csv, AgentController,
    AnalysisKind, IdealLinearController, NoiseMode,
};
use lattice::config::Strategy;
use lattice::envs::{EnvSpec, Environment, EpisodeMetrics, FlexExtArm, FlexExtParams, StepResult};
use lattice::exploration::LatticeConfig;
use lattice::policy::NoiseParams;
use lattice::trainer::Agent;
use lattice::{Error, Result};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn linear_map_transforms_covariance() {
    let mut rng = ChaCha8Rng::seed_from_u64(50);
    let l = DMatrix::from_row_slice(3, 3, &[1.0, 0.0, 0.0, 0.5, 0.8, 0.0, -0.3, 0.2, 0.6]);
    let w = random_matrix(4, 3, &mut rng);
    let samples: Vec<Vec<f64>> = (0..200_000)
        .map(|_| (&w * (&l * random_vector(3, &mut rng))).as_slice().to_vec())
        .collect();
    let (mean, cov) = empirical_covariance(&samples).unwrap();
    let want = &w * &l * l.transpose() * w.transpose();
    assert!((&cov - &want).norm() / want.norm() < 0.02);
    assert!(mean.norm() < 0.02 * want.trace().sqrt());
}

#[test]
fn isotropic_noise_needs_every_component() {
    let mut rng = ChaCha8Rng::seed_from_u64(51);
    let samples: Vec<Vec<f64>> = (0..20_000).map(|_| random_vector(5, &mut rng).as_slice().to_vec()).collect();
    assert_eq!(pca_explained_variance(&samples, 0.99).unwrap(), 5);
    let line: Vec<Vec<f64>> = (0..100)
        .map(|_| {
            let t = normal(&mut rng);
            vec![t, 2.0 * t, -t, 0.01 * normal(&mut rng)]
        })
        .collect();
    assert_eq!(pca_explained_variance(&line, 0.99).unwrap(), 1);
    assert!(matches!(
        pca_explained_variance(&line[..4], 0.9),
        Err(Error::InsufficientSamples { .. })
    ));
}

#[test]
fn explained_variance_of_known_spectrum() {
    let cov = DMatrix::from_diagonal(&DVector::from_column_slice(&[1.0, 10.0, 0.1]));
    let (eigs, curve) = explained_variance_curve(&cov).unwrap();
    assert_eq!(eigs.len(), 3);
    assert!((eigs[0] - 10.0).abs() < 1e-12 && (eigs[2] - 0.1).abs() < 1e-12);
    assert!((curve[0] - 10.0 / 11.1).abs() < 1e-12);
    assert!((curve[2] - 1.0).abs() < 1e-12);
    assert!(explained_variance_curve(&DMatrix::zeros(3, 3)).unwrap().1.is_empty());
}

#[test]
fn correlation_handles_constant_components() {
    let cov = DMatrix::from_row_slice(3, 3, &[4.0, 2.0, 0.0, 2.0, 9.0, 0.0, 0.0, 0.0, 0.0]);
    let c = correlation_from_covariance(&cov);
    assert!((c[(0, 1)] - 2.0 / 6.0).abs() < 1e-15);
    assert_eq!(c[(2, 2)], 1.0);
    assert_eq!(c[(0, 2)], 0.0);
}

fn structured_agent(seed: u64) -> Agent {
    let cfg = LatticeConfig {
        alpha: 1.0,
        ..LatticeConfig::default()
    };
    let mut agent = small_agent(2, &[4], 6, Strategy::Lattice, &cfg, seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    agent.policy.head.weight = random_matrix(6, 4, &mut rng);
    if let NoiseParams::Matrices(m) = &mut agent.policy.noise {
        m.log_std_a.fill(-3.0);
    }
    agent
}

fn states(n: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    (0..n).map(|_| vec![normal(rng), 0.3 * normal(rng)]).collect()
}

#[test]
fn sampled_noise_carries_latent_structure() {
    let agent = structured_agent(52);
    let mut rng = ChaCha8Rng::seed_from_u64(52);
    let s = noise_structure(&agent, &states(20, &mut rng), 500, 1).unwrap();
    assert!(s.pearson_r > 0.5, "{}", s.pearson_r);
    let narrow = small_agent(2, &[4], 2, Strategy::Lattice, &LatticeConfig::default(), 0);
    assert!(noise_structure(&narrow, &states(2, &mut rng), 5, 1).is_err());
}

#[test]
fn noise_covariance_trace_identity() {
    let agent = structured_agent(53);
    let mut rng = ChaCha8Rng::seed_from_u64(53);
    let cfg = &agent.lattice;
    for s in states(10, &mut rng) {
        let (x, _) = agent.policy.forward(&s).unwrap();
        let std = agent.policy.effective_std(cfg).unwrap();
        let w = &agent.policy.head.weight;
        let mut want = 0.0;
        for k in 0..x.len() {
            let v: f64 = (0..x.len()).map(|l| std.dist_x[(k, l)].powi(2) * x[l].powi(2)).sum();
            want += cfg.alpha.powi(2) * w.column(k).norm_squared() * v;
        }
        let got = agent.policy.latent_noise_covariance(&x, cfg).trace();
        assert!((got - want).abs() < 1e-12 * want.max(1.0));
        let total = agent.policy.action_covariance(&x, cfg).unwrap().trace();
        let independent: f64 = (0..6)
            .map(|i| (0..x.len()).map(|j| std.dist_a[(i, j)].powi(2) * x[j].powi(2)).sum::<f64>())
            .sum();
        assert!((total - want - independent - 6.0 * cfg.gamma).abs() < 1e-10);
    }
}

#[test]
fn covariance_report_contents() {
    let agent = structured_agent(54);
    let spec = EnvSpec::FlexExt(FlexExtParams {
        n_flexors: 3,
        n_extensors: 3,
        ..FlexExtParams::default()
    });
    let log = rollout_log(&agent, &spec, 3, false, 0).unwrap();
    assert_eq!(log.actions.len(), 300);
    assert_eq!(log.episodes.len(), 3);
    let r = covariance_report(&log.actions, &agent, &log.states).unwrap();
    assert_eq!(r.n_samples, 300);
    assert!(!r.degenerate);
    assert!((r.explained_variance.last().unwrap() - 1.0).abs() < 1e-12);
    assert!((0..6).all(|i| r.correlation[(i, i)] == 1.0));
    assert!(matches!(
        covariance_report(&log.actions[..59], &agent, &log.states),
        Err(Error::InsufficientSamples { needed: 60, got: 59 })
    ));
    let det = rollout_log(&agent, &spec, 1, true, 0).unwrap();
    assert_eq!(det.actions.len(), 100);
}

#[test]
fn allocation_symmetry_and_oracle() {
    let groups = vec![vec![0, 2], vec![1, 3]];
    let a = allocation_from_std(&[1.0, 1.0, 1.0, 1.0], &groups).unwrap();
    assert_eq!(a, vec![0.5, 0.5]);
    let a = allocation_from_std(&[1.0, 2.0, 3.0, 4.0], &groups).unwrap();
    assert!((a[0] - 0.4).abs() < 1e-15 && (a[1] - 0.6).abs() < 1e-15);

    let agent = structured_agent(55);
    let mut rng = ChaCha8Rng::seed_from_u64(55);
    let st = states(7, &mut rng);
    let groups = vec![vec![0, 1, 2], vec![3, 4, 5]];
    let got = noise_allocation(&agent, &st, &groups).unwrap();
    let mut diag = [0.0; 6];
    let std = agent.policy.effective_std(&agent.lattice).unwrap();
    for s in &st {
        let (x, _) = agent.policy.forward(s).unwrap();
        let c = brute_covariance(&x, &agent.policy.head.weight, &std.dist_x, &std.dist_a, 1.0, agent.lattice.gamma);
        for (i, d) in diag.iter_mut().enumerate() {
            *d += c[(i, i)] / st.len() as f64;
        }
    }
    let sd: Vec<f64> = diag.iter().map(|v| v.sqrt()).collect();
    let total: f64 = sd.iter().sum();
    assert!((got[0] - sd[..3].iter().sum::<f64>() / total).abs() < 1e-12);
    assert!((got[0] + got[1] - 1.0).abs() < 1e-12);
}

#[test]
fn allocation_rejects_bad_partitions() {
    let std = [1.0, 1.0, 1.0];
    assert!(matches!(
        allocation_from_std(&std, &[vec![0, 1, 2], vec![]]),
        Err(Error::EmptyGroup { index: 1 })
    ));
    for groups in [vec![vec![0, 1], vec![1, 2]], vec![vec![0], vec![1]], vec![vec![0, 1, 2, 3]]] {
        assert!(matches!(
            allocation_from_std(&std, &groups),
            Err(Error::InvalidPartition { .. })
        ));
    }
}

#[test]
fn zero_noise_dual_sim_has_no_deviation() {
    let ctrl = IdealLinearController {
        n_flexors: 2,
        n_extensors: 2,
        sigma: 0.0,
    };
    let params = FlexExtParams {
        n_flexors: 2,
        n_extensors: 2,
        ..FlexExtParams::default()
    };
    let mut env = FlexExtArm::new(params, 0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let r = dual_sim_experiment(&mut env, &ctrl, NoiseMode::Latent, &[], 500, &mut rng).unwrap();
    assert!(r.angle_deviation.iter().chain(&r.accel_deviation).all(|d| *d == 0.0));
    let r = dual_sim_experiment(&mut env, &ctrl, NoiseMode::Action, &[0.0; 4], 500, &mut rng).unwrap();
    assert!(r.accel_deviation.iter().all(|d| *d == 0.0));
    assert!(dual_sim_experiment(&mut env, &ctrl, NoiseMode::Action, &[0.0; 3], 5, &mut rng).is_err());
}

#[test]
fn deviation_follows_acceleration_difference() {
    let ctrl = IdealLinearController {
        n_flexors: 1,
        n_extensors: 1,
        sigma: 0.05,
    };
    let params = FlexExtParams {
        target_range: 0.2,
        ..FlexExtParams::default()
    };
    let dt = params.dt;
    let mut env = FlexExtArm::new(params, 1).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let r = dual_sim_experiment(&mut env, &ctrl, NoiseMode::Latent, &[], 1000, &mut rng).unwrap();
    // Semi-implicit Euler: position deviation is dt² times acceleration deviation.
    for (a, th) in r.accel_deviation.iter().zip(&r.angle_deviation) {
        assert!((a * dt * dt - th).abs() < 1e-12);
    }
    assert_eq!(r.injected_std.len(), 2);
    assert!((r.injected_std[0] - 0.05).abs() < 0.005);
}

#[test]
fn matched_runs_report_higher_latent_variance() {
    let ctrl = IdealLinearController {
        n_flexors: 3,
        n_extensors: 3,
        sigma: 0.05,
    };
    let params = FlexExtParams {
        target_range: 0.2,
        ..FlexExtParams::elbow()
    };
    let m = matched_dual_sim(&EnvSpec::FlexExt(params), &ctrl, 20_000, 3).unwrap();
    // Six independent actuators average out: ratio = n_per_group.
    assert!((m.accel_variance_ratio - 6.0).abs() < 0.4, "{}", m.accel_variance_ratio);
    assert!(m.wilcoxon.p_value < 1e-6);
    assert!(m.wilcoxon.z > 0.0);
}

#[test]
fn agent_controller_dual_sim_runs() {
    let agent = structured_agent(56);
    let ctrl = AgentController {
        agent: &agent,
        bounds: (0.0, 1.0),
    };
    let spec = EnvSpec::FlexExt(FlexExtParams {
        n_flexors: 3,
        n_extensors: 3,
        ..FlexExtParams::default()
    });
    let m = matched_dual_sim(&spec, &ctrl, 2_000, 0).unwrap();
    assert_eq!(m.latent.injected_std.len(), 6);
    assert_eq!(m.action.sigma_match, m.latent.injected_std);
    assert!(m.accel_variance_ratio.is_finite());
}

struct Opaque(FlexExtArm);

impl Environment for Opaque {
    fn obs_dim(&self) -> usize {
        self.0.obs_dim()
    }
    fn action_dim(&self) -> usize {
        self.0.action_dim()
    }
    fn max_steps(&self) -> usize {
        self.0.max_steps()
    }
    fn dt(&self) -> f64 {
        self.0.dt()
    }
    fn reset(&mut self) -> Vec<f64> {
        self.0.reset()
    }
    fn observe(&self) -> Vec<f64> {
        self.0.observe()
    }
    fn step(&mut self, action: &[f64]) -> Result<StepResult> {
        self.0.step(action)
    }
    fn positions(&self) -> Vec<f64> {
        self.0.positions()
    }
    fn velocities(&self) -> Vec<f64> {
        self.0.velocities()
    }
    fn actuator_groups(&self) -> Vec<Vec<usize>> {
        self.0.actuator_groups()
    }
}

#[test]
fn dual_sim_needs_state_sync() {
    let mut env = Opaque(FlexExtArm::new(FlexExtParams::default(), 0).unwrap());
    let ctrl = IdealLinearController {
        n_flexors: 1,
        n_extensors: 1,
        sigma: 0.1,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let err = dual_sim_experiment(&mut env, &ctrl, NoiseMode::Latent, &[], 10, &mut rng).unwrap_err();
    assert!(matches!(err, Error::StateSyncUnsupported));
}

#[test]
fn wilcoxon_is_antisymmetric() {
    let mut rng = ChaCha8Rng::seed_from_u64(57);
    let x: Vec<f64> = (0..300).map(|_| normal(&mut rng)).collect();
    let y: Vec<f64> = x.iter().map(|v| v + 0.1 + 0.5 * normal(&mut rng)).collect();
    let a = wilcoxon_signed_rank(&x, &y).unwrap();
    let b = wilcoxon_signed_rank(&y, &x).unwrap();
    assert!((a.z + b.z).abs() < 1e-12);
    assert!((a.p_value - b.p_value).abs() < 1e-12);
    assert!((a.w_plus + b.w_plus - 300.0 * 301.0 / 2.0).abs() < 1e-9);
    assert!(a.p_value < 0.05);
}

#[test]
fn energy_summary() {
    let eps: Vec<EpisodeMetrics> = [0.4, 0.1, 0.3, 0.2]
        .iter()
        .map(|&energy| EpisodeMetrics {
            energy,
            ..Default::default()
        })
        .collect();
    let d = energy_distribution(&eps).unwrap();
    assert_eq!((d.min, d.max), (0.1, 0.4));
    assert!((d.median - 0.25).abs() < 1e-15 && (d.mean - 0.25).abs() < 1e-15);
    assert!(energy_distribution(&[]).is_err());
}

#[test]
fn matrix_csv_round_trip() {
    let mut rng = ChaCha8Rng::seed_from_u64(58);
    let m = DMatrix::from_fn(3, 5, |_, _| rng.random::<f64>() * 1e-3 - 7.0);
    let text = write_matrix_csv(&m);
    assert!(text.starts_with("row,col,value\n"));
    assert_eq!(read_matrix_csv(&text).unwrap(), m);
    assert!(read_matrix_csv("row,col,value\n0,0,x\n").is_err());
}

#[test]
fn analysis_kind_names() {
    for (name, kind) in [
        ("dual-sim", AnalysisKind::DualSim),
        ("covariance", AnalysisKind::Covariance),
        ("pca", AnalysisKind::Pca),
        ("allocation", AnalysisKind::Allocation),
        ("energy", AnalysisKind::Energy),
    ] {
        assert_eq!(name.parse::<AnalysisKind>().unwrap(), kind);
    }
    assert!(matches!("spectral".parse::<AnalysisKind>(), Err(Error::UnknownAnalysisKind(_))));
}
