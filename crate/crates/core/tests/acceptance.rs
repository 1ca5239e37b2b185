//! Acceptance suite: one test per criterion, each printing a PASS line with
//! its measured values. Run with `cargo test --release --test acceptance`.

mod common;

use common::*;
use evipitch::active::{
    adaptation_curve, base_curve_point, Criterion, CurveConfig, CurvePoint,
};
use evipitch::dataio::{synthetic_corpus, FrontendConfig, LabeledClip, SyntheticSpec};
use evipitch::evidential::{
    beta_nll_loss_with_grad, dirichlet_kl_uniform, dirichlet_kl_uniform_with_grad, dirichlet_nll,
    dirichlet_nll_with_grad, dirichlet_uncertainties, nig_nll, nig_nll_with_grad, nig_regularizer,
    nig_regularizer_with_grad, nig_uncertainties, DirichletParams, NIGParams,
};
use evipitch::metrics;
use evipitch::network::{
    batch_backward, batch_loss, evaluate_model, train, Model, ModelConfig, Task, TrainParams,
    TrainStatus,
};
use evipitch::pitchgrid::{PitchGrid, TargetMode};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const MC_DRAWS: usize = 200_000;

fn desk_grid() -> PitchGrid {
    PitchGrid::with_bins(64).unwrap()
}

fn desk_frontend() -> FrontendConfig {
    FrontendConfig {
        truncate_freq: Some(257),
        n_mel: None,
    }
}

/// Clean source domain for the desk-scale experiments.
fn source_spec() -> SyntheticSpec {
    SyntheticSpec::default()
}

/// Shifted target domain: darker timbre, heavy noise, accompaniment hum,
/// and a pitch range extending past the source's.
fn target_spec() -> SyntheticSpec {
    SyntheticSpec {
        harmonic_decay: 0.45,
        noise_snr_db: 12.0,
        accompaniment_level: 0.35,
        pitch_min_hz: 65.0,
        pitch_max_hz: 760.0,
        ..SyntheticSpec::default()
    }
}

fn desk_corpus(
    spec: &SyntheticSpec,
    mode: TargetMode,
    count: usize,
    seed: u64,
    tag: &str,
) -> Vec<LabeledClip> {
    synthetic_corpus(spec, &desk_grid(), mode, &desk_frontend(), count, seed, tag).unwrap()
}

// ---------------------------------------------------------------------------
// Criterion 1: Dirichlet decomposition against the Monte-Carlo oracle.
// ---------------------------------------------------------------------------
#[test]
fn criterion_1_dirichlet_decomposition_oracle() {
    let ks = [2usize, 8, 384];
    let mut worst_z = 0.0f64;
    let mut worst_gap = 0.0f64;
    for i in 0..50u64 {
        let k = ks[(i % 3) as usize];
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + i);
        let alpha: Vec<f64> = (0..k).map(|_| uniform(&mut rng, 1.0, 9.0)).collect();
        let d = DirichletParams { alpha: alpha.clone() };
        let u = dirichlet_uncertainties(&d);

        // identity: u_a + u_e = H(mean probs)
        let h = categorical_entropy(&d.mean_probs());
        let gap = (u.aleatoric + u.epistemic - h).abs();
        assert!(gap <= 1e-9, "decomposition identity gap {gap}");

        // MC oracle: expected categorical entropy under Dir(alpha)
        let entropies: Vec<f64> = (0..MC_DRAWS)
            .map(|_| categorical_entropy(&sample_dirichlet(&alpha, &mut rng)))
            .collect();
        let (mc_mean, mc_se) = mean_se(&entropies);
        let z = (u.aleatoric - mc_mean).abs() / mc_se;
        assert!(
            z <= 3.0,
            "K={k}: analytic u_a {} vs MC {mc_mean} (se {mc_se:.2e}): z = {z:.2}",
            u.aleatoric
        );
        worst_z = worst_z.max(z);
        worst_gap = worst_gap.max(gap);
    }
    println!(
        "ACCEPTANCE 1 dirichlet-decomposition: PASS (worst |z| {worst_z:.2} <= 3, worst identity gap {worst_gap:.2e} <= 1e-9)"
    );
}

// ---------------------------------------------------------------------------
// Criterion 2: NIG moments against sampling; NLL against quadrature.
// ---------------------------------------------------------------------------
#[test]
fn criterion_2_nig_oracle() {
    // moment checks need alpha > 2 so the sampled variance of sigma^2 is finite
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut worst_z = 0.0f64;
    for _ in 0..50 {
        let p = NIGParams {
            gamma: uniform(&mut rng, -3.0, 3.0),
            nu: uniform(&mut rng, 0.5, 5.0),
            alpha: uniform(&mut rng, 2.5, 8.0),
            beta: uniform(&mut rng, 0.5, 5.0),
        };
        let u = nig_uncertainties(&p);
        let draws: Vec<(f64, f64)> = (0..MC_DRAWS)
            .map(|_| sample_nig(p.gamma, p.nu, p.alpha, p.beta, &mut rng))
            .collect();
        let sigma2s: Vec<f64> = draws.iter().map(|d| d.1).collect();
        let (s2_mean, s2_se) = mean_se(&sigma2s);
        let z_a = (u.aleatoric - s2_mean).abs() / s2_se;
        assert!(
            z_a <= 3.0,
            "sigma_a^2 {} vs E[sigma^2] {s2_mean} (se {s2_se:.2e}): z {z_a:.2}",
            u.aleatoric
        );

        // Var[mu] = sigma_e^2: compare against the mean squared deviation,
        // whose standard error follows from its own sample spread
        let mus: Vec<f64> = draws.iter().map(|d| d.0).collect();
        let n = mus.len() as f64;
        let mu_mean = mus.iter().sum::<f64>() / n;
        let devs2: Vec<f64> = mus.iter().map(|m| (m - mu_mean) * (m - mu_mean)).collect();
        let (var_mean, var_se) = mean_se(&devs2);
        let z_e = (u.epistemic - var_mean).abs() / var_se;
        assert!(
            z_e <= 3.0,
            "sigma_e^2 {} vs Var[mu] {var_mean} (se {var_se:.2e}): z {z_e:.2}",
            u.epistemic
        );
        worst_z = worst_z.max(z_a.max(z_e));
    }

    // NLL vs nested numerical integration of N(y|mu,s) * NIG(mu,s|params)
    let mut worst_rel = 0.0f64;
    for _ in 0..20 {
        let p = NIGParams {
            gamma: uniform(&mut rng, -2.0, 2.0),
            nu: uniform(&mut rng, 0.5, 4.0),
            alpha: uniform(&mut rng, 1.5, 6.0),
            beta: uniform(&mut rng, 0.5, 4.0),
        };
        let y = uniform(&mut rng, -3.0, 3.0);
        let analytic = nig_nll(&p, y);

        let ln_inv_gamma = |s2: f64| -> f64 {
            p.alpha * p.beta.ln() - statrs::function::gamma::ln_gamma(p.alpha)
                - (p.alpha + 1.0) * s2.ln()
                - p.beta / s2
        };
        // inner integral over mu, outer over t = ln sigma^2
        let integrand = |t: f64| -> f64 {
            let s2 = t.exp();
            let spread = (s2 / p.nu).sqrt() + s2.sqrt();
            let lo = (p.gamma - 40.0 * spread).min(y - 40.0 * spread);
            let hi = (p.gamma + 40.0 * spread).max(y + 40.0 * spread);
            let inner = adaptive_simpson(
                &|mu: f64| {
                    let like = (-(y - mu) * (y - mu) / (2.0 * s2)).exp()
                        / (2.0 * std::f64::consts::PI * s2).sqrt();
                    let prior_mu = (-(mu - p.gamma) * (mu - p.gamma) * p.nu / (2.0 * s2)).exp()
                        / (2.0 * std::f64::consts::PI * s2 / p.nu).sqrt();
                    like * prior_mu
                },
                lo,
                hi,
                1e-14,
            );
            // d sigma^2 = sigma^2 dt
            inner * ln_inv_gamma(s2).exp() * s2
        };
        let mode = (p.beta / (p.alpha + 1.0)).ln();
        let marginal = adaptive_simpson(&integrand, mode - 30.0, mode + 30.0, 1e-14);
        let numeric = -marginal.ln();
        let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs());
        assert!(rel <= 1e-6, "nig_nll {analytic} vs quadrature {numeric}: rel {rel:.2e}");
        worst_rel = worst_rel.max(rel);
    }
    println!(
        "ACCEPTANCE 2 nig-oracle: PASS (worst moment |z| {worst_z:.2} <= 3, worst NLL rel err {worst_rel:.2e} <= 1e-6)"
    );
}

// ---------------------------------------------------------------------------
// Criterion 3: gradient suite, losses and the full tiny network.
// ---------------------------------------------------------------------------
#[test]
fn criterion_3_gradient_suite() {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let h = 1e-4;
    let mut worst_loss_rel = 0.0f64;
    let mut worst_by_family = std::collections::BTreeMap::new();
    let mut track = |family: &'static str, rel: f64, worst: &mut f64| {
        let e = worst_by_family.entry(family).or_insert(0.0f64);
        if rel > *e {
            *e = rel;
        }
        if rel > *worst {
            *worst = rel;
        }
    };

    for _ in 0..100 {
        // dirichlet NLL + KL
        let k = rng.gen_range(2..10);
        let alpha: Vec<f64> = (0..k).map(|_| uniform(&mut rng, 1.01, 6.0)).collect();
        let true_class = rng.gen_range(0..k);
        let mut y = vec![0.0; k];
        y[true_class] = 1.0;
        let d = DirichletParams { alpha: alpha.clone() };

        let (_, g) = dirichlet_nll_with_grad(&d, &y).unwrap();
        let fd = fd_grad(
            |a| dirichlet_nll(&DirichletParams { alpha: a.to_vec() }, &y).unwrap(),
            &alpha,
            h,
        );
        track("dirichlet_nll", max_rel_err(&g, &fd, 1e-7), &mut worst_loss_rel);

        let (_, g) = dirichlet_kl_uniform_with_grad(&d, &y).unwrap();
        let fd = fd_grad(
            |a| dirichlet_kl_uniform(&DirichletParams { alpha: a.to_vec() }, &y).unwrap(),
            &alpha,
            h,
        );
        track("dirichlet_kl", max_rel_err(&g, &fd, 1e-7), &mut worst_loss_rel);

        // NIG NLL + regularizer
        let p = [
            uniform(&mut rng, -2.0, 2.0),
            uniform(&mut rng, 0.2, 4.0),
            uniform(&mut rng, 1.2, 5.0),
            uniform(&mut rng, 0.2, 4.0),
        ];
        let target = uniform(&mut rng, -3.0, 3.0);
        let nigp = NIGParams { gamma: p[0], nu: p[1], alpha: p[2], beta: p[3] };
        let (_, g) = nig_nll_with_grad(&nigp, target);
        let fd = fd_grad(
            |v| nig_nll(&NIGParams { gamma: v[0], nu: v[1], alpha: v[2], beta: v[3] }, target),
            &p,
            h,
        );
        track(
            "nig_nll",
            max_rel_err(&[g.d_gamma, g.d_nu, g.d_alpha, g.d_beta], &fd, 1e-7),
            &mut worst_loss_rel,
        );

        let (_, g) = nig_regularizer_with_grad(&nigp, target);
        let fd = fd_grad(
            |v| nig_regularizer(&NIGParams { gamma: v[0], nu: v[1], alpha: v[2], beta: v[3] }, target),
            &p,
            h,
        );
        track(
            "nig_regularizer",
            max_rel_err(&[g.d_gamma, g.d_nu, g.d_alpha, g.d_beta], &fd, 1e-7),
            &mut worst_loss_rel,
        );

        // beta-NLL with the variance weight held fixed
        let (mu, lv, target, b) = (
            uniform(&mut rng, -2.0, 2.0),
            uniform(&mut rng, -1.5, 1.5),
            uniform(&mut rng, -2.0, 2.0),
            uniform(&mut rng, 0.0, 1.0),
        );
        let (_, g) = beta_nll_loss_with_grad(mu, lv, target, b);
        let weight = lv.exp().powf(b);
        let fixed = |m: f64, l: f64| {
            let var = l.exp();
            weight * ((target - m) * (target - m) / (2.0 * var) + 0.5 * l)
        };
        // no special functions here, so the FD step can be much smaller
        let hb = 1e-6;
        let fd = [
            (fixed(mu + hb, lv) - fixed(mu - hb, lv)) / (2.0 * hb),
            (fixed(mu, lv + hb) - fixed(mu, lv - hb)) / (2.0 * hb),
        ];
        track("beta_nll", max_rel_err(&g, &fd, 1e-7), &mut worst_loss_rel);
    }
    assert!(
        worst_loss_rel <= 1e-4,
        "loss gradient worst rel err {worst_loss_rel:.2e} (per family: {worst_by_family:?})"
    );

    // full tiny network: 2 blocks (4+8 filters), K=16, T=10, F=65, dropout 0
    let mut worst_net_rel = 0.0f64;
    for task in [Task::M1, Task::M2] {
        let cfg = ModelConfig::tiny(task);
        let grid = PitchGrid::with_bins(16).unwrap();
        let frontend = FrontendConfig { truncate_freq: Some(65), n_mel: None };
        let clips: Vec<LabeledClip> = synthetic_corpus(
            &source_spec(),
            &grid,
            task.target_mode(),
            &frontend,
            2,
            500,
            "fd",
        )
        .unwrap()
        .into_iter()
        .map(|mut c| {
            // shorten to T = 10 frames
            c.features.data.truncate(10 * 65);
            c.features.n_frames = 10;
            c.targets.truncate(10);
            c
        })
        .collect();
        let refs: Vec<&LabeledClip> = clips.iter().collect();
        let params = TrainParams::default();
        let mut model = Model::new(cfg).unwrap();
        let _ = batch_backward(&mut model, &refs, 0.7, &params).unwrap();
        let analytic = model.grad_vector();
        let theta0 = model.param_vector();

        let mut coord_rng = ChaCha8Rng::seed_from_u64(7);
        let mut checked = 0usize;
        let mut attempts = 0usize;
        while checked < 100 && attempts < 1000 {
            attempts += 1;
            let i = coord_rng.gen_range(0..theta0.len());
            let mut theta = theta0.clone();
            let hh = 1e-5 * theta0[i].abs().max(1.0);
            theta[i] = theta0[i] + hh;
            model.set_param_vector(&theta);
            let up = batch_loss(&mut model, &refs, 0.7, &params).unwrap();
            theta[i] = theta0[i] - hh;
            model.set_param_vector(&theta);
            let dn = batch_loss(&mut model, &refs, 0.7, &params).unwrap();
            theta[i] = theta0[i];
            model.set_param_vector(&theta);
            let fd = (up - dn) / (2.0 * hh);
            let a = analytic[i];
            if a.abs() < 1e-7 && fd.abs() < 1e-7 {
                // dead coordinate: both sides below the FD noise floor
                continue;
            }
            checked += 1;
            let rel = (a - fd).abs() / a.abs().max(fd.abs()).max(1e-6);
            assert!(
                rel <= 1e-3,
                "{} param {i}: analytic {a} vs fd {fd} (rel {rel:.2e})",
                task.name()
            );
            worst_net_rel = worst_net_rel.max(rel);
        }
        assert!(checked >= 100, "{}: only {checked} informative coordinates found", task.name());
    }
    println!(
        "ACCEPTANCE 3 gradient-suite: PASS (loss worst rel {worst_loss_rel:.2e} <= 1e-4, network worst rel {worst_net_rel:.2e} <= 1e-3)"
    );
}

// ---------------------------------------------------------------------------
// Criterion 4: pitch grid reference values.
// ---------------------------------------------------------------------------
#[test]
fn criterion_4_pitch_grid() {
    let g = PitchGrid::default();
    for k in 0..g.n_bins {
        assert_eq!(g.hz_to_bin(g.bin_to_hz(k).unwrap()).unwrap(), k, "round trip bin {k}");
    }
    assert_eq!(g.hz_to_bin(440.0).unwrap(), 296);
    let edge = g.upper_edge_hz();
    assert!((edge - 830.61).abs() < 0.1, "upper edge {edge}");
    println!(
        "ACCEPTANCE 4 pitch-grid: PASS (384-bin round trip exact, 440 Hz -> bin 296, edge {edge:.2} Hz within 0.1 of 830.61)"
    );
}

// ---------------------------------------------------------------------------
// Criterion 5: metrics against an independent brute-force implementation.
// ---------------------------------------------------------------------------
#[test]
fn criterion_5_metrics_brute_force() {
    fn brute_hit(reference: f64, est: f64, tol: f64, chroma: bool) -> bool {
        if est <= 0.0 {
            return false;
        }
        let d = 1200.0 * (est / reference).log2();
        if chroma {
            (-6..=6).any(|n| (d - 1200.0 * n as f64).abs() <= tol)
        } else {
            d.abs() <= tol
        }
    }
    fn brute_rpa(r: &[f64], e: &[f64], tol: f64, chroma: bool) -> f64 {
        let v: Vec<usize> = (0..r.len()).filter(|&i| r[i] > 0.0).collect();
        if v.is_empty() {
            return 1.0;
        }
        v.iter().filter(|&&i| brute_hit(r[i], e[i], tol, chroma)).count() as f64 / v.len() as f64
    }
    fn brute_oa(r: &[f64], e: &[f64], tol: f64) -> f64 {
        if r.is_empty() {
            return 1.0;
        }
        (0..r.len())
            .filter(|&i| if r[i] <= 0.0 { e[i] <= 0.0 } else { brute_hit(r[i], e[i], tol, false) })
            .count() as f64
            / r.len() as f64
    }

    let mut rng = ChaCha8Rng::seed_from_u64(31);
    for track in 0..1000 {
        let n = rng.gen_range(1..60);
        let frame = |rng: &mut ChaCha8Rng| {
            if rng.gen::<f64>() < 0.3 {
                0.0
            } else {
                52.0 * (rng.gen::<f64>() * 3.9).exp2()
            }
        };
        let reference: Vec<f64> = (0..n).map(|_| frame(&mut rng)).collect();
        let estimate: Vec<f64> = reference
            .iter()
            .map(|&r| {
                let roll: f64 = rng.gen();
                if roll < 0.15 {
                    0.0
                } else if roll < 0.35 && r > 0.0 {
                    r * 2.0
                } else if r > 0.0 {
                    r * (rng.gen_range(-90.0..90.0) / 1200.0f64).exp2()
                } else {
                    frame(&mut rng)
                }
            })
            .collect();
        let rpa = metrics::rpa(&reference, &estimate, 50.0).unwrap();
        let rca = metrics::rca(&reference, &estimate, 50.0).unwrap();
        let oa = metrics::oa(&reference, &estimate, 50.0).unwrap();
        assert_eq!(rpa, brute_rpa(&reference, &estimate, 50.0, false), "track {track} rpa");
        assert_eq!(rca, brute_rpa(&reference, &estimate, 50.0, true), "track {track} rca");
        assert_eq!(oa, brute_oa(&reference, &estimate, 50.0), "track {track} oa");
        assert!(rca >= rpa, "track {track}: rca < rpa");
        let doubled: Vec<f64> =
            estimate.iter().map(|&x| if x > 0.0 { 2.0 * x } else { 0.0 }).collect();
        assert_eq!(
            rca,
            metrics::rca(&reference, &doubled, 50.0).unwrap(),
            "track {track} octave invariance"
        );
    }
    println!(
        "ACCEPTANCE 5 metrics-brute-force: PASS (exact agreement on 1000 random tracks, RCA >= RPA, octave-doubling invariant)"
    );
}

// ---------------------------------------------------------------------------
// Criterion 6: overfit sanity for M1 and M2.
// ---------------------------------------------------------------------------
#[test]
fn criterion_6_overfit_sanity() {
    let grid = desk_grid();
    for task in [Task::M1, Task::M2] {
        let clips = desk_corpus(&source_spec(), task.target_mode(), 8, 600, "overfit");
        let cfg = ModelConfig {
            dropout_rate: 0.0,
            ..ModelConfig::desk_scale(task)
        };
        let digest = cfg.digest();
        let params = TrainParams {
            epochs: 200,
            batch_size: 8,
            lr: 1e-3,
            seed: 1,
            ..TrainParams::default()
        };
        let out = train(cfg, &clips, &[], &params, &grid, &digest).unwrap();
        assert_eq!(out.status, TrainStatus::Completed, "{} diverged", task.name());
        let (_, mean) = evaluate_model(&out.model, &clips, &grid).unwrap();
        assert!(
            mean.oa >= 0.95,
            "{}: training OA {:.3} < 0.95 after 200 epochs",
            task.name(),
            mean.oa
        );
        println!(
            "ACCEPTANCE 6 overfit-sanity [{}]: PASS (training OA {:.3} >= 0.95 within 200 epochs)",
            task.name(),
            mean.oa
        );
    }
}

// ---------------------------------------------------------------------------
// Criterion 7: Figure-1-style ordering at desk scale.
// ---------------------------------------------------------------------------
#[test]
fn criterion_7_adaptation_curve_ordering() {
    let grid = desk_grid();
    let task = Task::M2;
    let mode = task.target_mode();

    let source = desk_corpus(&source_spec(), mode, 200, 10_000, "source");
    let (train_set, val_set) = source.split_at(160);
    let pool = desk_corpus(&target_spec(), mode, 300, 20_000, "pool");
    let test_set = desk_corpus(&target_spec(), mode, 60, 30_000, "test");

    let cfg = ModelConfig::desk_scale(task);
    let digest = cfg.digest();
    let params = TrainParams {
        epochs: 25,
        batch_size: 8,
        lr: 1e-3,
        seed: 5,
        ..TrainParams::default()
    };
    let base = train(cfg, train_set, val_set, &params, &grid, &digest).unwrap();
    assert_eq!(base.status, TrainStatus::Completed);

    let curve_cfg = CurveConfig {
        criteria: vec![Criterion::Epistemic, Criterion::Aleatoric, Criterion::Random],
        budgets: vec![25, 50, 100, 200],
        seeds: vec![1, 2, 3],
        finetune: TrainParams {
            epochs: 15,
            batch_size: 8,
            lr: 1e-4,
            ..TrainParams::default()
        },
        voiced_only_scoring: false,
    };
    let rows = adaptation_curve(&base.best, &pool, &test_set, &curve_cfg, &grid).unwrap();

    let oa_at = |criterion: Criterion, budget: usize| -> Vec<f64> {
        rows.iter()
            .filter(|r| r.criterion == criterion && r.budget == budget)
            .map(|r| r.oa)
            .collect()
    };
    let median = |mut v: Vec<f64>| -> f64 {
        v.sort_by(|a, b| a.partial_cmp(b).unwrap());
        v[v.len() / 2]
    };

    // (a) shared budget-0 rows
    let base_rows: Vec<&CurvePoint> = rows.iter().filter(|r| r.budget == 0).collect();
    assert_eq!(base_rows.len(), 3);
    for r in &base_rows {
        assert_eq!(
            (r.rpa, r.rca, r.oa),
            (base_rows[0].rpa, base_rows[0].rca, base_rows[0].oa),
            "budget-0 rows differ across criteria"
        );
    }
    let base_oa = base_rows[0].oa;

    // (b) median epistemic OA dominates at every budget >= 50
    let mut summary = String::new();
    for &budget in &[50usize, 100, 200] {
        let epi = median(oa_at(Criterion::Epistemic, budget));
        let ale = median(oa_at(Criterion::Aleatoric, budget));
        let rnd = median(oa_at(Criterion::Random, budget));
        summary.push_str(&format!("B{budget}: E {epi:.3} A {ale:.3} R {rnd:.3}; "));
        assert!(
            epi >= ale && epi >= rnd,
            "budget {budget}: epistemic {epi:.3} not >= aleatoric {ale:.3} and random {rnd:.3}"
        );
    }

    // (c) epistemic at the largest budget clears base by >= 10 points
    let epi_top = median(oa_at(Criterion::Epistemic, 200));
    assert!(
        epi_top >= base_oa + 0.10,
        "epistemic OA at budget 200 ({epi_top:.3}) not >= base ({base_oa:.3}) + 0.10"
    );
    println!(
        "ACCEPTANCE 7 adaptation-ordering: PASS (base OA {base_oa:.3}; {summary}epistemic@200 {epi_top:.3} >= base + 0.10)"
    );
}

// ---------------------------------------------------------------------------
// Criterion 8: ablation direction M2 >= R2 >= R1 - 2pp on the source domain.
// ---------------------------------------------------------------------------
#[test]
fn criterion_8_ablation_direction() {
    let grid = desk_grid();
    let mut oas = std::collections::BTreeMap::new();
    for task in [Task::M2, Task::R2, Task::R1] {
        let mode = task.target_mode();
        let corpus = desk_corpus(&source_spec(), mode, 200, 10_000, "source");
        let (train_set, rest) = corpus.split_at(140);
        let (val_set, test_set) = rest.split_at(30);
        let cfg = ModelConfig::desk_scale(task);
        let digest = cfg.digest();
        let params = TrainParams {
            epochs: 25,
            batch_size: 8,
            lr: 1e-3,
            seed: 5,
            ..TrainParams::default()
        };
        let out = train(cfg, train_set, val_set, &params, &grid, &digest).unwrap();
        assert_eq!(out.status, TrainStatus::Completed, "{} diverged", task.name());
        let (best_model, _) = out.best.restore().unwrap();
        let (_, mean) = evaluate_model(&best_model, test_set, &grid).unwrap();
        oas.insert(task.name(), mean.oa);
    }
    let (m2, r2, r1) = (oas["M2"], oas["R2"], oas["R1"]);
    assert!(m2 >= r2, "M2 OA {m2:.3} < R2 OA {r2:.3}");
    assert!(r2 >= r1 - 0.02, "R2 OA {r2:.3} < R1 OA {r1:.3} - 0.02");
    println!("ACCEPTANCE 8 ablation-direction: PASS (OA M2 {m2:.3} >= R2 {r2:.3} >= R1 {r1:.3} - 0.02)");
}

// ---------------------------------------------------------------------------
// Criterion 9: byte-identical reruns of every pipeline stage.
// ---------------------------------------------------------------------------
#[test]
fn criterion_9_determinism() {
    use evipitch::active::{score_samples, write_curve_csv, ScoreConfig};
    use evipitch::dataio::{generate_synthetic_clip, write_label_csv};
    use evipitch::dsp::write_wav_mono16;

    let grid = desk_grid();
    let dir = tempfile::tempdir().unwrap();
    let stage = |run: usize, dir: &std::path::Path| -> (Vec<u8>, Vec<u8>, Vec<u8>, Vec<u8>) {
        let run_dir = dir.join(format!("run{run}"));
        std::fs::create_dir_all(&run_dir).unwrap();
        // synth stage
        let (audio, labels) = generate_synthetic_clip(&source_spec(), &grid, 42).unwrap();
        let wav = run_dir.join("clip.wav");
        let csv = run_dir.join("clip.csv");
        write_wav_mono16(&wav, &audio).unwrap();
        write_label_csv(&csv, &labels).unwrap();

        // train stage (short), logged through the same float formatting
        let clips = desk_corpus(&source_spec(), TargetMode::M2R2, 8, 77, "det");
        let cfg = ModelConfig::desk_scale(Task::M2);
        let digest = cfg.digest();
        let params = TrainParams {
            epochs: 2,
            batch_size: 4,
            seed: 3,
            ..TrainParams::default()
        };
        let out = train(cfg, &clips[..6], &clips[6..], &params, &grid, &digest).unwrap();
        let mut log_csv = String::from("epoch,train_loss,val_loss,val_oa,lambda_t\n");
        for l in &out.log {
            log_csv.push_str(&format!(
                "{},{:.6},{:.6},{:.6},{:.6}\n",
                l.epoch,
                l.train_loss,
                l.val_loss.unwrap(),
                l.val_oa.unwrap(),
                l.lambda_t
            ));
        }
        let log_path = run_dir.join("log.csv");
        std::fs::write(&log_path, log_csv).unwrap();

        // eval + scoring + curve CSV stage
        let scores = score_samples(
            &out.model,
            &clips[..],
            Criterion::Epistemic,
            &grid,
            &ScoreConfig::default(),
        )
        .unwrap();
        let base = base_curve_point(&out.best, &clips[6..], Criterion::Epistemic, &grid).unwrap();
        let curve_path = run_dir.join("curve.csv");
        write_curve_csv(&curve_path, &[base], &digest).unwrap();
        let mut score_csv = String::from("sample_id,score\n");
        for s in &scores {
            score_csv.push_str(&format!("{},{:.9}\n", s.sample_id, s.score));
        }
        let score_path = run_dir.join("scores.csv");
        std::fs::write(&score_path, score_csv).unwrap();

        (
            std::fs::read(&wav).unwrap(),
            std::fs::read(&csv).unwrap(),
            std::fs::read(&log_path).unwrap(),
            [std::fs::read(&curve_path).unwrap(), std::fs::read(&score_path).unwrap()].concat(),
        )
    };
    let a = stage(1, dir.path());
    let b = stage(2, dir.path());
    assert_eq!(a.0, b.0, "synth WAV bytes differ");
    assert_eq!(a.1, b.1, "label CSV bytes differ");
    assert_eq!(a.2, b.2, "train log bytes differ");
    assert_eq!(a.3, b.3, "eval/curve CSV bytes differ");
    println!(
        "ACCEPTANCE 9 determinism: PASS (synth, train, eval, curve outputs byte-identical across reruns)"
    );
}
