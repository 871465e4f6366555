mod common;

use common::{campaign, cheap_gp, median, normals, rng};
use nalgebra::DVector;
use osscal::koh::{self, KohAssembly};
use osscal::linalg;
use osscal::oss::{self, OssTarget};
use osscal::simulator::SynthConfig;
use osscal::GpFit;

/// Raw single-output assembly over `n_sites` field sites.
fn assembly(n_sites: usize, seed: u64) -> KohAssembly {
    let cfg = SynthConfig {
        j_count: 1,
        k_count: 1,
        noise_base: vec![0.05],
        sim_noise: vec![0.0],
        missing_rate: 0.0,
        ..SynthConfig::default()
    };
    let (sites, field) = campaign(&cfg, n_sites, 20, seed);
    let ens = oss::build_oss(&sites, 1, 1, &cheap_gp(seed)).unwrap();
    let field_std = ens.standardizer.field(&field);
    koh::assemble(&ens, &field_std, 0, OssTarget::Raw(0), None, None).unwrap()
}

/// Replaces the field values so the observed discrepancy at `u` is `d`.
fn with_discrepancy(asm: &KohAssembly, u: &[f64], d: &DVector<f64>) -> KohAssembly {
    let (mean, _) = asm.site_predictions(u).unwrap();
    asm.with_field_y(mean + d).unwrap()
}

fn loo_residuals(fit: &GpFit) -> DVector<f64> {
    let inv = linalg::chol_inverse(fit.chol());
    DVector::from_fn(fit.len(), |i, _| fit.alpha()[i] / inv[(i, i)])
}

#[test]
fn smooth_discrepancy_is_interpolated() {
    let asm = assembly(30, 1);
    let u = [0.4, 0.5, 0.6, 0.3];
    let x = asm.field_x();
    let d = DVector::from_fn(x.nrows(), |i, _| (3.0 * x[(i, 0)]).sin() + 0.5 * x[(i, 1)] * x[(i, 1)]);
    let range = d.max() - d.min();
    let fit = koh::fit_bias_hypers(&with_discrepancy(&asm, &u, &d), &u, &cheap_gp(0)).unwrap();
    assert!((fit.targets() - &d).amax() < 1e-9);
    let worst = loo_residuals(&fit).amax();
    assert!(worst <= 0.01 * range, "LOO error {worst} vs range {range}");
}

#[test]
fn white_noise_discrepancy_goes_to_the_nugget() {
    let sigma2: f64 = 0.04;
    let u = [0.5; 4];
    let asm = assembly(40, 2);
    let mut ratios = Vec::new();
    for seed in 0..10u64 {
        let d = normals(&mut rng(seed), asm.len(), sigma2.sqrt());
        let fit = koh::fit_bias_hypers(&with_discrepancy(&asm, &u, &d), &u, &cheap_gp(seed)).unwrap();
        ratios.push(fit.hyper().noise_variance() / sigma2);
    }
    let m = median(ratios.clone());
    assert!((0.5..=2.0).contains(&m), "median ratio {m}, all {ratios:?}");
}
