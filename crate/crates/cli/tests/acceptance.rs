//! Acceptance criteria, one pass/fail line each. Pass criterion numbers as
//! arguments to run a subset, e.g. `cargo test --test acceptance -- 1 4`.

use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use osscal::basis::{self, PcBasis};
use osscal::calibrate::{self, McmcOptions, Prior};
use osscal::gp::{self, GpFit};
use osscal::koh::{self, KohAssembly};
use osscal::oss::{self, OssTarget};
use osscal::predict::{predict_basis, PredictionModel};
use osscal::KernelHyper;
use osscal_cli::pipeline;
use osscal_cli::RunConfig;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn minutes(d: Duration) -> String {
    let s = d.as_secs_f64();
    format!("{}m{:04.1}s", (s / 60.0).floor(), s % 60.0)
}

// ---------------------------------------------------------------- oracles

fn k_se(a: &[f64], b: &[f64], h: &KernelHyper) -> f64 {
    let d: f64 = a.iter().zip(b).zip(&h.lengthscales).map(|((x, y), t)| (x - y).powi(2) / t).sum();
    h.scale * (-d).exp()
}

fn row(m: &DMatrix<f64>, r: usize) -> Vec<f64> {
    m.row(r).iter().copied().collect()
}

fn mvn_logpdf(cov: &DMatrix<f64>, y: &DVector<f64>) -> f64 {
    let n = y.len() as f64;
    let chol = cov.clone().cholesky().expect("oracle covariance positive definite");
    let z = chol.l().solve_lower_triangular(y).unwrap();
    let log_det: f64 = 2.0 * chol.l().diagonal().iter().map(|v| v.ln()).sum::<f64>();
    -0.5 * z.norm_squared() - 0.5 * log_det - 0.5 * n * (2.0 * std::f64::consts::PI).ln()
}

/// Simulations of every site, then field values; optionally one extra site
/// (sims only) appended after the training sites. Zero mean throughout.
struct DenseModel {
    cov: DMatrix<f64>,
    data: DVector<f64>,
}

fn dense_model(
    fits: &[GpFit],
    field_x: &DMatrix<f64>,
    field_y: &DVector<f64>,
    bias: Option<&KernelHyper>,
    extra: Option<&GpFit>,
    u: &[f64],
) -> DenseModel {
    let blocks: Vec<&GpFit> = fits.iter().chain(extra).collect();
    let nm: usize = blocks.iter().map(|f| f.len()).sum();
    let nf = fits.len();
    let n = nm + nf;
    let mut cov = DMatrix::zeros(n, n);
    let mut data = DVector::zeros(n);
    let mut off = 0;
    for (i, f) in blocks.iter().enumerate() {
        let h = f.hyper();
        for a in 0..f.len() {
            data[off + a] = f.targets()[a];
            for b in 0..f.len() {
                cov[(off + a, off + b)] = k_se(&row(f.inputs(), a), &row(f.inputs(), b), h);
            }
            cov[(off + a, off + a)] += h.scale * h.nugget;
            if i < nf {
                let c = k_se(&row(f.inputs(), a), u, h);
                cov[(off + a, nm + i)] = c;
                cov[(nm + i, off + a)] = c;
            }
        }
        if i < nf {
            cov[(nm + i, nm + i)] = h.scale * (1.0 + h.nugget);
        }
        off += f.len();
    }
    for a in 0..nf {
        data[nm + a] = field_y[a];
        if let Some(b) = bias {
            for c in 0..nf {
                cov[(nm + a, nm + c)] += k_se(&row(field_x, a), &row(field_x, c), b);
            }
            cov[(nm + a, nm + a)] += b.scale * b.nugget;
        }
    }
    DenseModel { cov, data }
}

fn random_hyper(rng: &mut ChaCha8Rng, dim: usize, scale: (f64, f64), theta: (f64, f64), nugget: (f64, f64)) -> KernelHyper {
    let log_uniform = |rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)| (rng.random_range(lo.ln()..hi.ln())).exp();
    let s = log_uniform(rng, scale);
    let t = (0..dim).map(|_| log_uniform(rng, theta)).collect();
    let g = log_uniform(rng, nugget);
    KernelHyper::new(s, t, g).unwrap()
}

fn random_matrix(rng: &mut ChaCha8Rng, n: usize, p: usize) -> DMatrix<f64> {
    DMatrix::from_fn(n, p, |_, _| rng.random::<f64>())
}

fn random_normal(rng: &mut ChaCha8Rng, n: usize, sd: f64) -> DVector<f64> {
    DVector::from_fn(n, |_, _| sd * rng.sample::<f64, _>(StandardNormal))
}

struct Instance {
    asm: KohAssembly,
    fits: Vec<GpFit>,
    field_x: DMatrix<f64>,
    field_y: DVector<f64>,
    bias: Option<KernelHyper>,
    u: Vec<f64>,
}

fn random_instance(seed: u64, with_bias: bool) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let nf = rng.random_range(1..=6);
    let p_u = rng.random_range(1..=4);
    let p_x = rng.random_range(1..=3);
    let fits: Vec<GpFit> = (0..nf)
        .map(|_| {
            let n = rng.random_range(2..=12);
            let h = random_hyper(&mut rng, p_u, (0.2, 3.0), (0.05, 2.0), (1e-6, 0.1));
            let x = random_matrix(&mut rng, n, p_u);
            let y = random_normal(&mut rng, n, h.scale.sqrt());
            GpFit::new(x, y, h).unwrap()
        })
        .collect();
    let field_x = random_matrix(&mut rng, nf, p_x);
    let field_y = random_normal(&mut rng, nf, 1.0);
    let bias = with_bias.then(|| random_hyper(&mut rng, p_x, (0.05, 1.0), (0.1, 2.0), (1e-4, 0.1)));
    let u: Vec<f64> = (0..p_u).map(|_| rng.random::<f64>()).collect();
    let asm = KohAssembly::new(0, (0..nf).collect(), fits.clone(), field_x.clone(), field_y.clone(), bias.clone()).unwrap();
    Instance {
        asm,
        fits,
        field_x,
        field_y,
        bias,
        u,
    }
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}

// ---------------------------------------------------------------- criteria

fn c1_likelihood() -> Outcome {
    let t = Instant::now();
    let mut worst: f64 = 0.0;
    for s in 0..50u64 {
        let inst = random_instance(1000 + s, s % 2 == 0);
        let fast = inst.asm.loglik(&inst.u).unwrap();
        let d = dense_model(&inst.fits, &inst.field_x, &inst.field_y, inst.bias.as_ref(), None, &inst.u);
        worst = worst.max(rel_err(fast, mvn_logpdf(&d.cov, &d.data)));
    }
    let el = t.elapsed();
    outcome(
        worst <= 1e-8 && el < Duration::from_secs(30),
        format!("max relative error {worst:.2e} over 50 instances, {:.2}s", el.as_secs_f64()),
    )
}

fn c2_prediction() -> Outcome {
    let t = Instant::now();
    let mut worst: f64 = 0.0;
    for s in 0..20u64 {
        let inst = random_instance(2000 + s, s % 4 != 3);
        let mut rng = ChaCha8Rng::seed_from_u64(3000 + s);
        let p_u = inst.u.len();
        let n_new = rng.random_range(2..=12);
        let h = random_hyper(&mut rng, p_u, (0.2, 3.0), (0.05, 2.0), (1e-6, 0.1));
        let x = random_matrix(&mut rng, n_new, p_u);
        let y = random_normal(&mut rng, n_new, h.scale.sqrt());
        let new_fit = GpFit::new(x, y, h.clone()).unwrap();
        let new_x: Vec<f64> = (0..inst.field_x.ncols()).map(|_| rng.random::<f64>()).collect();
        let (mean, var) = predict_basis(&inst.asm, &new_x, &new_fit, &inst.u).unwrap();

        // Joint over (training sims, new sims, training field) and the new
        // field value.
        let d = dense_model(&inst.fits, &inst.field_x, &inst.field_y, inst.bias.as_ref(), Some(&new_fit), &inst.u);
        let nm_train: usize = inst.fits.iter().map(GpFit::len).sum();
        let n = d.data.len();
        let nf = inst.fits.len();
        let mut cross = DVector::zeros(n);
        for a in 0..n_new {
            cross[nm_train + a] = k_se(&row(new_fit.inputs(), a), &inst.u, &h);
        }
        let mut prior_var = h.scale * (1.0 + h.nugget);
        if let Some(b) = &inst.bias {
            for i in 0..nf {
                cross[n - nf + i] = k_se(&new_x, &row(&inst.field_x, i), b);
            }
            prior_var += b.scale * (1.0 + b.nugget);
        }
        let chol = d.cov.clone().cholesky().unwrap();
        let w = chol.solve(&cross);
        let m_ref = w.dot(&d.data);
        let v_ref = prior_var - w.dot(&cross);
        let scale = prior_var.sqrt();
        worst = worst.max((mean - m_ref).abs() / m_ref.abs().max(scale)).max(rel_err(var, v_ref));
    }
    let el = t.elapsed();
    outcome(
        worst <= 1e-8 && el < Duration::from_secs(30),
        format!("max relative error {worst:.2e} over 20 instances, {:.2}s", el.as_secs_f64()),
    )
}

fn c3_gradient() -> Outcome {
    let mut worst: f64 = 0.0;
    for s in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(4000 + s);
        let p = rng.random_range(1..=4);
        let n = rng.random_range(5..=30);
        let h = random_hyper(&mut rng, p, (0.2, 3.0), (0.05, 2.0), (1e-4, 0.5));
        let x = random_matrix(&mut rng, n, p);
        let y = DVector::from_fn(n, |i, _| (3.0 * x[(i, 0)]).sin() + 0.1 * rng.sample::<f64, _>(StandardNormal));
        let g = gp::nll_gradient(&x, &y, &h).unwrap();
        let mut params = vec![h.scale.ln()];
        params.extend(h.lengthscales.iter().map(|t| t.ln()));
        params.push(h.nugget.ln());
        let nll = |v: &[f64]| {
            let hh = KernelHyper::new(v[0].exp(), v[1..=p].iter().map(|t| t.exp()).collect(), v[p + 1].exp()).unwrap();
            -gp::log_marginal_likelihood(&x, &y, &hh).unwrap()
        };
        let step = 1e-5;
        let fd: Vec<f64> = (0..params.len())
            .map(|c| {
                let mut a = params.clone();
                let mut b = params.clone();
                a[c] += step;
                b[c] -= step;
                (nll(&a) - nll(&b)) / (2.0 * step)
            })
            .collect();
        let norm = fd.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for (gc, fc) in g.iter().zip(&fd) {
            worst = worst.max((gc - fc).abs() / fc.abs().max(1e-2 * norm).max(1e-8));
        }
    }
    outcome(worst <= 1e-4, format!("max relative error {worst:.2e} over 20 instances"))
}

/// Cyclic Jacobi eigendecomposition of a symmetric matrix.
fn jacobi_eigen(a: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let n = a.nrows();
    let mut m = a.clone();
    let mut v = DMatrix::identity(n, n);
    for _ in 0..100 {
        let off: f64 = (0..n).flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j))).map(|(i, j)| m[(i, j)].powi(2)).sum();
        if off < 1e-30 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if m[(p, q)].abs() < 1e-300 {
                    continue;
                }
                let theta = (m[(q, q)] - m[(p, p)]) / (2.0 * m[(p, q)]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (mkp, mkq) = (m[(k, p)], m[(k, q)]);
                    m[(k, p)] = c * mkp - s * mkq;
                    m[(k, q)] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let (mpk, mqk) = (m[(p, k)], m[(q, k)]);
                    m[(p, k)] = c * mpk - s * mqk;
                    m[(q, k)] = s * mpk + c * mqk;
                }
                for k in 0..n {
                    let (vkp, vkq) = (v[(k, p)], v[(k, q)]);
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }
    ((0..n).map(|i| m[(i, i)]).collect(), v)
}

fn c4_pca() -> Outcome {
    let mut worst_w: f64 = 0.0;
    let mut worst_rt: f64 = 0.0;
    for s in 0..10u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(5000 + s);
        // With two columns the eigenvectors are (1, ±1)/√2 and the sign
        // rule is a tie.
        let k = rng.random_range(3..=6);
        let n = rng.random_range(k + 5..60);
        let mix = random_matrix(&mut rng, k, k);
        let raw = DMatrix::from_fn(n, k, |_, _| rng.sample::<f64, _>(StandardNormal));
        let d = raw * mix + DMatrix::from_fn(n, k, |_, c| 3.0 * c as f64);
        let b: PcBasis = basis::fit_pc_basis(&d, 0).unwrap();

        let mean: Vec<f64> = (0..k).map(|c| d.column(c).sum() / n as f64).collect();
        let sd: Vec<f64> = (0..k)
            .map(|c| (d.column(c).iter().map(|v| (v - mean[c]).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt())
            .collect();
        let z = DMatrix::from_fn(n, k, |r, c| (d[(r, c)] - mean[c]) / sd[c]);
        let corr = z.transpose() * &z / (n - 1) as f64;
        let (vals, vecs) = jacobi_eigen(&corr);
        let mut order: Vec<usize> = (0..k).collect();
        order.sort_by(|&a, &b| vals[b].total_cmp(&vals[a]));
        let total: f64 = vals.iter().sum();
        for (c, &o) in order.iter().enumerate() {
            let mut col: Vec<f64> = vecs.column(o).iter().copied().collect();
            let big = col.iter().copied().fold(0.0f64, |m, v| if v.abs() > m.abs() { v } else { m });
            if big < 0.0 {
                col.iter_mut().for_each(|v| *v = -*v);
            }
            for r in 0..k {
                worst_w = worst_w.max((b.w[(r, c)] - col[r]).abs());
            }
            worst_w = worst_w.max((b.var_fractions[c] - vals[o] / total).abs());
        }
        let y = random_matrix(&mut rng, 7, k) * 4.0;
        let back = basis::back_project(&basis::project(&y, &b, k).unwrap(), &b).unwrap();
        worst_rt = worst_rt.max((back - &y).amax());
    }
    outcome(
        worst_w <= 1e-8 && worst_rt <= 1e-10,
        format!("max basis error {worst_w:.2e}, max round-trip error {worst_rt:.2e} over 10 instances"),
    )
}

fn c5_scree() -> Outcome {
    let cfg = RunConfig::default();
    let d = pipeline::designs(&cfg).unwrap();
    let c = pipeline::simulate(&cfg, &d).unwrap();
    let ens = oss::prepare_oss(&c.sites, cfg.synth.j_count, cfg.synth.k_count).unwrap();
    let bases = pipeline::fit_bases(&ens, &c.sites, &c.field).unwrap();
    let fr: Vec<f64> = bases.iter().map(|b| b.var_fractions[0]).collect();
    let pass = fr.iter().all(|f| (0.84..=0.99).contains(f));
    outcome(pass, format!("first-PC fractions {:?}", fr.iter().map(|f| format!("{:.4}", f)).collect::<Vec<_>>()))
}

fn unbiased_config(seed: u64, n_sim: usize, samples: usize) -> RunConfig {
    let mut cfg = RunConfig::default();
    cfg.synth.seed = seed;
    cfg.synth.bias_amp = 0.0;
    cfg.synth.noise_base = vec![0.02, 0.015, 0.012, 0.01];
    cfg.n_field = 8;
    cfg.n_sim = n_sim;
    cfg.n_new = 1;
    cfg.n_holdout = 1;
    cfg.gp_multistarts = 1;
    cfg.gp_seed = seed;
    cfg.map_multistarts = 4;
    cfg.map_seed = seed;
    cfg.mcmc_samples = samples;
    cfg.mcmc_burn_in = 1000;
    cfg.mcmc_seed = seed;
    cfg
}

/// Coverage counts per coordinate: each coordinate's 90% interval must hold
/// u_star in at least 16 of the 20 replicates. The time limit applies to one
/// calibration run.
fn c6_recovery() -> Outcome {
    let t = Instant::now();
    let mut per_coord = vec![0usize; 4];
    let mut all_coords = 0;
    let mut worst_map: f64 = 0.0;
    let mut slowest = Duration::ZERO;
    for seed in 1..=20u64 {
        let start = Instant::now();
        let cfg = unbiased_config(seed, 200, 20_000);
        let run = pipeline::run_joint(&cfg, 1).unwrap();
        slowest = slowest.max(start.elapsed());
        let u_star = &cfg.synth.u_star;
        let err = run.map.u.iter().zip(u_star).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        worst_map = worst_map.max(err);
        let covers: Vec<bool> = run.chain.summary().iter().zip(u_star).map(|(s, &v)| s.covers(v)).collect();
        for (n, &c) in per_coord.iter_mut().zip(&covers) {
            *n += usize::from(c);
        }
        all_coords += usize::from(covers.iter().all(|&c| c));
        eprintln!("  6: replicate {seed}: MAP error {err:.4}, covers {covers:?}, elapsed {}", minutes(t.elapsed()));
    }
    let min_cover = per_coord.iter().copied().min().unwrap_or(0);
    outcome(
        worst_map <= 0.05 && min_cover >= 16 && slowest <= Duration::from_secs(600),
        format!(
            "max MAP error {worst_map:.4}, per-coordinate coverage {per_coord:?}/20 (all coordinates {all_coords}/20), slowest run {}, total {}",
            minutes(slowest),
            minutes(t.elapsed())
        ),
    )
}

fn mean_width(chain: &calibrate::Chain) -> f64 {
    let s = chain.summary();
    s.iter().map(|c| c.width90()).sum::<f64>() / s.len() as f64
}

fn c7_pooling() -> Outcome {
    let mut wins = 0;
    let mut ratios = Vec::new();
    for seed in 1..=20u64 {
        let cfg = unbiased_config(seed, 100, 4000);
        let run = pipeline::run_joint(&cfg, 1).unwrap();
        let joint = mean_width(&run.chain);
        let prior = cfg.prior().unwrap();
        let gp = cfg.gp();
        let bare = pipeline::pc1_assemblies(&run.ensemble, &run.bases, &run.campaign.field).unwrap();
        let mut best = f64::INFINITY;
        for (j, a) in bare.iter().enumerate() {
            let map = calibrate::optimize_map(|u| calibrate::modular_objective(u, a, &prior, &gp), cfg.synth.p_u, &cfg.map_options()).unwrap();
            let biased = pipeline::with_bias_at(std::slice::from_ref(a), &map.u, &pipeline::bias_config(&gp, j)).unwrap();
            let chain = pipeline::sample(&cfg, &biased, &prior, &map.u, cfg.mcmc_samples).unwrap();
            best = best.min(mean_width(&chain));
        }
        wins += usize::from(joint <= best);
        ratios.push(joint / best);
    }
    ratios.sort_by(f64::total_cmp);
    outcome(
        wins >= 15,
        format!("joint narrower in {wins}/20, median width ratio {:.3}", ratios[ratios.len() / 2]),
    )
}

fn c8_bias_correction() -> Outcome {
    let mut cfg = RunConfig::default();
    cfg.synth.seed = 1;
    cfg.n_field = 10;
    cfg.n_sim = 100;
    cfg.n_new = 1;
    cfg.n_holdout = 1;
    cfg.gp_multistarts = 1;
    cfg.map_multistarts = 4;
    cfg.mcmc_samples = 4000;
    cfg.mcmc_burn_in = 1000;
    let k = cfg.synth.k_count;
    let run = pipeline::run_joint(&cfg, k).unwrap();
    let u_ref = run.chain.mean();
    let draws = pipeline::chain_draws(&run.chain, 100);
    let field = &run.campaign.field;
    let with = PredictionModel::build(&run.ensemble, &run.bases, field, &u_ref, &cfg.gp(), true).unwrap();
    let without = PredictionModel::build(&run.ensemble, &run.bases, field, &u_ref, &cfg.gp(), false).unwrap();
    let lw = with.loocv(&draws).unwrap();
    let ln = without.loocv(&draws).unwrap();
    let better = lw.rmse.iter().zip(&ln.rmse).filter(|(a, b)| a.rmse < b.rmse).count();
    let cov = lw.coverage();
    outcome(
        better == lw.rmse.len() && lw.rmse.len() == 16 && (0.85..=1.0).contains(&cov),
        format!(
            "bias correction better in {better}/{} cells, coverage {cov:.3} (without: {:.3})",
            lw.rmse.len(),
            ln.coverage()
        ),
    )
}

fn c9_prior() -> Outcome {
    let prior = Prior::beta(1, 2.0, 2.0).unwrap();
    let opts = McmcOptions {
        samples: 100_000,
        burn_in: 2000,
        seed: 9,
        ..McmcOptions::default()
    };
    let chain = calibrate::mcmc(|u| prior.log_density(u), &[0.5], &opts).unwrap();
    let x: Vec<f64> = chain.samples.column(0).iter().copied().collect();
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let mut sorted = x.clone();
    sorted.sort_by(f64::total_cmp);
    let cdf = |v: f64| 3.0 * v * v - 2.0 * v * v * v;
    let ks = sorted
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            let f = cdf(v);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max);
    outcome(
        (mean - 0.5).abs() <= 0.01 && (var - 0.05).abs() <= 0.005 && ks < 0.02,
        format!("mean {mean:.4}, variance {var:.4}, KS {ks:.4} at T=100000"),
    )
}

fn c10_scale() -> Outcome {
    let mut cfg = RunConfig::default();
    cfg.synth.seed = 10;
    cfg.synth.missing_rate = 0.0;
    cfg.n_field = 284;
    cfg.n_sim = 100;
    cfg.n_new = 1;
    cfg.n_holdout = 1;
    cfg.design_sweeps = 2;
    cfg.gp_multistarts = 1;
    let d = pipeline::designs(&cfg).unwrap();
    let c = pipeline::simulate(&cfg, &d).unwrap();
    let t = Instant::now();
    let (ens, bases) = pipeline::fit_pc_ensemble(&cfg, &c.sites, &c.field, 1).unwrap();
    let field_std = ens.standardizer.field(&c.field);
    let asm = koh::assemble(&ens, &field_std, 0, OssTarget::Pc(0), Some(&bases[0]), None).unwrap();
    let u0 = vec![0.5; cfg.synth.p_u];
    let bias = koh::fit_bias_hypers(&asm, &u0, &cfg.gp()).unwrap();
    let asm = asm.with_bias(Some(bias.hyper().clone())).unwrap();
    let pre = t.elapsed();
    let n_total: usize = asm.fits().iter().map(GpFit::len).sum::<usize>() + asm.len();
    let t = Instant::now();
    let ll = asm.loglik(&cfg.synth.u_star).unwrap();
    let eval = t.elapsed();
    outcome(
        ll.is_finite() && eval < Duration::from_secs(2) && pre < Duration::from_secs(60),
        format!(
            "N_M+N_F = {n_total}, precompute {:.1}s, one evaluation {:.1}ms",
            pre.as_secs_f64(),
            eval.as_secs_f64() * 1e3
        ),
    )
}

fn run_cli(dir: &Path, cfg: &Path) -> bool {
    Command::new(env!("CARGO_BIN_EXE_osscal"))
        .args(["run", "--config"])
        .arg(cfg)
        .arg("--set")
        .arg(format!("out_dir={}", dir.display()))
        .env("RUST_LOG", "warn")
        .status()
        .map(|s| s.success())
        .unwrap_or(false)
}

fn c11_determinism() -> Outcome {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("run.cfg");
    std::fs::write(
        &cfg,
        "seed = 11\nn_field = 5\nn_sim = 30\nn_holdout = 8\nmap_multistarts = 2\nmcmc_samples = 300\nmcmc_burn_in = 100\nunivariate_samples = 100\npredict_samples = 30\n",
    )
    .unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    if !run_cli(&a, &cfg) || !run_cli(&b, &cfg) {
        return outcome(false, "pipeline run failed".into());
    }
    let mut names: Vec<_> = std::fs::read_dir(&a).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    let differing: Vec<String> = names
        .iter()
        .filter(|n| std::fs::read(a.join(n)).ok() != std::fs::read(b.join(n)).ok())
        .map(|n| n.to_string_lossy().into_owned())
        .collect();
    let extra = std::fs::read_dir(&b).unwrap().count() != names.len();
    outcome(
        differing.is_empty() && !extra,
        format!("{} files compared, differing: {differing:?}", names.len()),
    )
}

fn main() {
    let wanted: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let criteria: [(usize, &str, fn() -> Outcome); 11] = [
        (1, "block likelihood vs dense oracle", c1_likelihood),
        (2, "prediction vs dense conditional", c2_prediction),
        (3, "gradient vs finite differences", c3_gradient),
        (4, "PCA vs Jacobi eigendecomposition", c4_pca),
        (5, "scree regime", c5_scree),
        (6, "calibration recovery", c6_recovery),
        (7, "pooling benefit", c7_pooling),
        (8, "bias-correction benefit", c8_bias_correction),
        (9, "prior-only sampling", c9_prior),
        (10, "scale test", c10_scale),
        (11, "determinism", c11_determinism),
    ];
    let mut run = 0;
    let mut failed = 0;
    for (id, name, f) in criteria {
        if !wanted.is_empty() && !wanted.contains(&id) {
            continue;
        }
        let t = Instant::now();
        let o = f();
        run += 1;
        failed += usize::from(!o.pass);
        println!(
            "[{}] {id:>2} {name}: {} ({})",
            if o.pass { "PASS" } else { "FAIL" },
            o.detail,
            minutes(t.elapsed())
        );
    }
    println!("acceptance: {}/{run} criteria passed", run - failed);
    // Failures are reported, not fatal, unless asked for.
    if failed > 0 && std::env::var_os("ACCEPTANCE_STRICT").is_some_and(|v| v == "1") {
        std::process::exit(1);
    }
}
