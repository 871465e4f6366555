#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use osscal::basis::{self, PcBasis};
use osscal::design;
use osscal::koh::{self, KohAssembly};
use osscal::oss::{self, OssEnsemble, OssTarget};
use osscal::simulator::{FieldDataset, SiteDataset, SynthConfig, SynthModel};
use osscal::GpConfig;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn normals(rng: &mut ChaCha8Rng, n: usize, sd: f64) -> DVector<f64> {
    DVector::from_fn(n, |_, _| {
        let z: f64 = StandardNormal.sample(rng);
        sd * z
    })
}

pub fn cheap_gp(seed: u64) -> GpConfig {
    GpConfig {
        multistarts: 1,
        seed,
        ..GpConfig::default()
    }
}

pub fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Sites on an LHS field design with LHS runs at each, plus field data.
pub fn campaign(cfg: &SynthConfig, n_sites: usize, rows: usize, seed: u64) -> (Vec<SiteDataset>, FieldDataset) {
    let model = SynthModel::new(cfg).unwrap();
    let xf = design::lhs(n_sites, cfg.p_x, seed).unwrap().points;
    let designs: Vec<_> = (0..n_sites)
        .map(|i| design::lhs(rows, cfg.p_u, seed * 1000 + 1 + i as u64).unwrap())
        .collect();
    (model.run_campaign(&xf, &designs).unwrap(), model.gen_field(&xf).unwrap())
}

/// PC surrogates for every component and the first-PC assembly of each
/// property.
pub fn pc_setup(
    sites: &[SiteDataset],
    field: &FieldDataset,
    cfg: &SynthConfig,
    gp: &GpConfig,
) -> (OssEnsemble, Vec<PcBasis>, Vec<KohAssembly>) {
    let mut ens = oss::prepare_oss(sites, cfg.j_count, cfg.k_count).unwrap();
    let usable: Vec<SiteDataset> = sites.iter().map(|s| ens.standardizer.site(s)).collect();
    let field_std = ens.standardizer.field(field);
    let bases: Vec<PcBasis> = (0..cfg.j_count)
        .map(|j| basis::fit_pc_basis(&basis::assemble_discrepancy(&field_std, &usable, j, cfg.k_count).unwrap(), j).unwrap())
        .collect();
    ens.fit_pc(sites, &bases, cfg.k_count, gp).unwrap();
    let asms = bases
        .iter()
        .map(|b| koh::assemble(&ens, &field_std, b.property, OssTarget::Pc(0), Some(b), None).unwrap())
        .collect();
    (ens, bases, asms)
}

/// n×p matrix of independent uniforms.
pub fn uniform_matrix(rng: &mut ChaCha8Rng, n: usize, p: usize) -> DMatrix<f64> {
    use rand::Rng;
    DMatrix::from_fn(n, p, |_, _| rng.random::<f64>())
}
