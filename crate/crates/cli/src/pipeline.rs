//! Stage computations without file handling, shared by the subcommands and
//! the test suites.

use osscal::basis::{self, PcBasis};
use osscal::calibrate::{self, Chain, MapResult, Prior};
use osscal::design::{self, Design};
use osscal::koh::{self, KohAssembly};
use osscal::linalg::mix_seed;
use osscal::oss::{self, OssEnsemble, OssTarget};
use osscal::simulator::{FieldDataset, SiteDataset, SynthConfig, SynthModel};
use osscal::{GpConfig, Result};

use crate::config::RunConfig;

/// Salts separating the random streams of the run.
mod salt {
    pub const FIELD_DESIGN: u64 = 1;
    pub const NEW_FIELD_DESIGN: u64 = 2;
    pub const HOLDOUT_CAMPAIGN: u64 = 3;
    pub const NEW_CAMPAIGN: u64 = 4;
    pub const SIM_DESIGN: u64 = 1 << 20;
    pub const HOLDOUT_DESIGN: u64 = 2 << 20;
    pub const NEW_SIM_DESIGN: u64 = 3 << 20;
    pub const BIAS: u64 = 4 << 20;
}

#[derive(Clone, Debug)]
pub struct Designs {
    pub field: Design,
    pub sims: Vec<Design>,
    pub holdout: Vec<Design>,
    pub new_field: Design,
    pub new_sims: Vec<Design>,
}

pub fn designs(cfg: &RunConfig) -> Result<Designs> {
    let s = &cfg.synth;
    let seed = s.seed;
    let sims = |n_sites: usize, n: usize, base: u64| -> Result<Vec<Design>> {
        (0..n_sites)
            .map(|i| design::maximin_lhs(n, s.p_u, cfg.design_sweeps, mix_seed(seed, base + i as u64)))
            .collect()
    };
    Ok(Designs {
        field: design::maximin_lhs(cfg.n_field, s.p_x, cfg.design_sweeps, mix_seed(seed, salt::FIELD_DESIGN))?,
        sims: sims(cfg.n_field, cfg.n_sim, salt::SIM_DESIGN)?,
        holdout: (0..cfg.n_field)
            .map(|i| design::lhs(cfg.n_holdout, s.p_u, mix_seed(seed, salt::HOLDOUT_DESIGN + i as u64)))
            .collect::<Result<_>>()?,
        new_field: design::lhs(cfg.n_new, s.p_x, mix_seed(seed, salt::NEW_FIELD_DESIGN))?,
        new_sims: sims(cfg.n_new, cfg.n_sim, salt::NEW_SIM_DESIGN)?,
    })
}

#[derive(Clone, Debug)]
pub struct Campaign {
    pub sites: Vec<SiteDataset>,
    pub field: FieldDataset,
    /// Extra runs at the training sites, never used for fitting.
    pub holdout: Vec<SiteDataset>,
    pub new_sites: Vec<SiteDataset>,
    /// Field observations at the new sites, for scoring predictions.
    pub new_field: FieldDataset,
}

fn reseeded(cfg: &SynthConfig, salt: u64) -> SynthConfig {
    SynthConfig {
        seed: mix_seed(cfg.seed, salt),
        ..cfg.clone()
    }
}

pub fn simulate(cfg: &RunConfig, d: &Designs) -> Result<Campaign> {
    let model = SynthModel::new(&cfg.synth)?;
    let holdout_model = SynthModel::new(&reseeded(&cfg.synth, salt::HOLDOUT_CAMPAIGN))?;
    let new_model = SynthModel::new(&reseeded(&cfg.synth, salt::NEW_CAMPAIGN))?;
    Ok(Campaign {
        sites: model.run_campaign(&d.field.points, &d.sims)?,
        field: model.gen_field(&d.field.points)?,
        holdout: holdout_model.run_campaign(&d.field.points, &d.holdout)?,
        new_sites: new_model.run_campaign(&d.new_field.points, &d.new_sims)?,
        new_field: new_model.gen_field(&d.new_field.points)?,
    })
}

/// One basis per property, fitted on the campaign-standardized discrepancy.
pub fn fit_bases(ens: &OssEnsemble, sites: &[SiteDataset], field: &FieldDataset) -> Result<Vec<PcBasis>> {
    let usable: Vec<SiteDataset> = sites
        .iter()
        .filter(|s| ens.site_meta(s.site_index).is_some())
        .map(|s| ens.standardizer.site(s))
        .collect();
    let field_std = ens.standardizer.field(field);
    (0..ens.j_count)
        .map(|j| basis::fit_pc_basis(&basis::assemble_discrepancy(&field_std, &usable, j, ens.k_count)?, j))
        .collect()
}

/// Ensemble holding only PC surrogates for the leading `components`
/// coordinates, along with the bases they were trained on.
pub fn fit_pc_ensemble(
    cfg: &RunConfig,
    sites: &[SiteDataset],
    field: &FieldDataset,
    components: usize,
) -> Result<(OssEnsemble, Vec<PcBasis>)> {
    let mut ens = oss::prepare_oss(sites, cfg.synth.j_count, cfg.synth.k_count)?;
    let bases = fit_bases(&ens, sites, field)?;
    ens.fit_pc(sites, &bases, components, &cfg.gp())?;
    Ok((ens, bases))
}

/// First-PC assemblies of every property, without bias hyperparameters.
pub fn pc1_assemblies(ens: &OssEnsemble, bases: &[PcBasis], field: &FieldDataset) -> Result<Vec<KohAssembly>> {
    let field_std = ens.standardizer.field(field);
    bases
        .iter()
        .map(|b| koh::assemble(ens, &field_std, b.property, OssTarget::Pc(0), Some(b), None))
        .collect()
}

/// Per-output assemblies on the raw standardized columns.
pub fn raw_assemblies(ens: &OssEnsemble, field: &FieldDataset) -> Result<Vec<KohAssembly>> {
    let field_std = ens.standardizer.field(field);
    let mut out = Vec::new();
    for j in 0..ens.j_count {
        for k in 0..ens.k_count {
            out.push(koh::assemble(ens, &field_std, j, OssTarget::Raw(k), None, None)?);
        }
    }
    Ok(out)
}

pub fn joint_map(cfg: &RunConfig, asms: &[KohAssembly], prior: &Prior) -> Result<MapResult> {
    let gp = cfg.gp();
    calibrate::optimize_map(
        |u| calibrate::joint_modular_objective(u, asms, prior, &gp),
        cfg.synth.p_u,
        &cfg.map_options(),
    )
}

/// Seed of the bias fit attached to assembly `index`.
pub fn bias_config(gp: &GpConfig, index: usize) -> GpConfig {
    gp.with_seed(mix_seed(gp.seed, salt::BIAS + index as u64))
}

/// Fixes each assembly's bias hyperparameters at their fit to the observed
/// discrepancy at `u`.
pub fn with_bias_at(asms: &[KohAssembly], u: &[f64], gp: &GpConfig) -> Result<Vec<KohAssembly>> {
    asms.iter()
        .enumerate()
        .map(|(i, a)| {
            let fit = koh::fit_bias_hypers(a, u, &bias_config(gp, i))?;
            a.with_bias(Some(fit.hyper().clone()))
        })
        .collect()
}

pub fn sample(cfg: &RunConfig, asms: &[KohAssembly], prior: &Prior, init: &[f64], samples: usize) -> Result<Chain> {
    calibrate::mcmc(|u| calibrate::joint_log_posterior(u, asms, prior), init, &cfg.mcmc_options(samples))
}

/// At most `max` evenly spaced draws from the chain.
pub fn chain_draws(chain: &Chain, max: usize) -> Vec<Vec<f64>> {
    let th = chain.thinned(max);
    (0..th.len()).map(|t| th.sample(t)).collect()
}

/// Everything from designs to the joint posterior, kept in memory.
#[derive(Clone, Debug)]
pub struct JointRun {
    pub campaign: Campaign,
    pub ensemble: OssEnsemble,
    pub bases: Vec<PcBasis>,
    pub map: MapResult,
    /// First-PC assemblies with bias fixed at the MAP.
    pub assemblies: Vec<KohAssembly>,
    pub chain: Chain,
}

/// Calibrates on the first PC of every property: PC surrogates, joint MAP,
/// bias fit at the MAP, then MCMC from the MAP.
pub fn run_joint(cfg: &RunConfig, components: usize) -> Result<JointRun> {
    let d = designs(cfg)?;
    let campaign = simulate(cfg, &d)?;
    let (ensemble, bases) = fit_pc_ensemble(cfg, &campaign.sites, &campaign.field, components)?;
    let asms = pc1_assemblies(&ensemble, &bases, &campaign.field)?;
    let prior = cfg.prior()?;
    let map = joint_map(cfg, &asms, &prior)?;
    let assemblies = with_bias_at(&asms, &map.u, &cfg.gp())?;
    let chain = sample(cfg, &assemblies, &prior, &map.u, cfg.mcmc_samples)?;
    Ok(JointRun {
        campaign,
        ensemble,
        bases,
        map,
        assemblies,
        chain,
    })
}
