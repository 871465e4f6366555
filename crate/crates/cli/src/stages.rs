//! Subcommands. Each stage reads the files written by earlier stages from
//! `out_dir` and writes its own.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use nalgebra::DMatrix;
use osscal::basis::PcBasis;
use osscal::calibrate::{self, Chain, CoordSummary, MapResult};
use osscal::design::{Design, DesignKind};
use osscal::io::{self, BasisRecord, EnsembleRecord};
use osscal::koh::KohAssembly;
use osscal::oss::{self, FitDiagnostic, OssEnsemble};
use osscal::predict::{LooRmse, LooSite, PredictionModel};
use osscal::simulator::{FieldDataset, SiteDataset};
use osscal::KernelHyper;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::pipeline::{self, Campaign, Designs};
use crate::CliError;

type StageResult = Result<(), CliError>;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CalibrateMode {
    ModularPc,
    JointMap,
    Bayes,
    UnivariateCompare,
}

fn numbered(prefix: &str, n: usize) -> Vec<String> {
    (1..=n).map(|l| format!("{prefix}{l}")).collect()
}

fn start(cfg: &RunConfig, stage: &str) -> StageResult {
    fs::create_dir_all(&cfg.out_dir).map_err(osscal::Error::Io)?;
    let hash = cfg.hash();
    log::info!("{stage}: config {hash}");
    let recorded = cfg.path("config.txt");
    if stage != "design" {
        if let Ok(text) = fs::read_to_string(&recorded) {
            match RunConfig::parse(&text) {
                Ok(prev) if prev.hash() != hash => {
                    log::warn!("{stage}: config {hash} differs from {} recorded in {}", prev.hash(), recorded.display())
                }
                Err(e) => log::warn!("{stage}: cannot read {}: {e}", recorded.display()),
                _ => {}
            }
        }
    }
    Ok(())
}

// ---------------------------------------------------------------- campaign

fn sim_design_file(i: usize) -> String {
    format!("sim_design_{i}.csv")
}

fn holdout_design_file(i: usize) -> String {
    format!("holdout_design_{i}.csv")
}

fn new_sim_design_file(i: usize) -> String {
    format!("new_sim_design_{i}.csv")
}

pub fn design(cfg: &RunConfig) -> StageResult {
    start(cfg, "design")?;
    fs::write(cfg.path("config.txt"), cfg.recorded_text()).map_err(osscal::Error::Io)?;
    let d = pipeline::designs(cfg)?;
    let p_x = cfg.synth.p_x;
    io::write_matrix(&cfg.path("field_design.csv"), &numbered("x", p_x), &d.field.points)?;
    io::write_matrix(&cfg.path("new_field_design.csv"), &numbered("x", p_x), &d.new_field.points)?;
    for (i, s) in d.sims.iter().enumerate() {
        io::write_design(&cfg.path(&sim_design_file(i)), s)?;
    }
    for (i, s) in d.holdout.iter().enumerate() {
        io::write_design(&cfg.path(&holdout_design_file(i)), s)?;
    }
    for (i, s) in d.new_sims.iter().enumerate() {
        io::write_design(&cfg.path(&new_sim_design_file(i)), s)?;
    }
    log::info!(
        "design: {} field sites, {} runs each, min distance {:.4}",
        d.field.len(),
        cfg.n_sim,
        d.field.min_distance()
    );
    Ok(())
}

fn read_x(cfg: &RunConfig, name: &str) -> Result<DMatrix<f64>, CliError> {
    let path = cfg.path(name);
    let (header, m) = io::read_matrix(&path)?;
    if header != numbered("x", cfg.synth.p_x) {
        return Err(osscal::Error::Schema {
            file: path.display().to_string(),
            message: format!("expected columns x1..x{}", cfg.synth.p_x),
        }
        .into());
    }
    Ok(m)
}

fn read_designs(cfg: &RunConfig, n: usize, file: fn(usize) -> String, kind: DesignKind) -> Result<Vec<Design>, CliError> {
    (0..n)
        .map(|i| {
            Ok(Design {
                points: io::read_design(&cfg.path(&file(i)))?,
                kind,
                seed: 0,
            })
        })
        .collect()
}

fn load_designs(cfg: &RunConfig) -> Result<Designs, CliError> {
    let field = read_x(cfg, "field_design.csv")?;
    let new_field = read_x(cfg, "new_field_design.csv")?;
    let (nf, nn) = (field.nrows(), new_field.nrows());
    Ok(Designs {
        sims: read_designs(cfg, nf, sim_design_file, DesignKind::MaximinLhs)?,
        holdout: read_designs(cfg, nf, holdout_design_file, DesignKind::Lhs)?,
        new_sims: read_designs(cfg, nn, new_sim_design_file, DesignKind::MaximinLhs)?,
        field: Design {
            points: field,
            kind: DesignKind::MaximinLhs,
            seed: 0,
        },
        new_field: Design {
            points: new_field,
            kind: DesignKind::Lhs,
            seed: 0,
        },
    })
}

fn site_file(i: usize) -> String {
    format!("site_{i}.csv")
}

fn holdout_file(i: usize) -> String {
    format!("holdout_{i}.csv")
}

fn new_site_file(i: usize) -> String {
    format!("new_site_{i}.csv")
}

pub fn simulate(cfg: &RunConfig) -> StageResult {
    start(cfg, "simulate")?;
    let d = load_designs(cfg)?;
    let c = pipeline::simulate(cfg, &d)?;
    let (jc, kc) = (cfg.synth.j_count, cfg.synth.k_count);
    for s in &c.sites {
        io::write_site(&cfg.path(&site_file(s.site_index)), s, jc, kc)?;
    }
    for s in &c.holdout {
        io::write_site(&cfg.path(&holdout_file(s.site_index)), s, jc, kc)?;
    }
    for s in &c.new_sites {
        io::write_site(&cfg.path(&new_site_file(s.site_index)), s, jc, kc)?;
    }
    io::write_field(&cfg.path("field.csv"), &c.field, jc, kc)?;
    io::write_field(&cfg.path("new_field.csv"), &c.new_field, jc, kc)?;
    let runs: usize = c.sites.iter().map(|s| s.u.nrows()).sum();
    let failed: usize = c.sites.iter().map(|s| s.u.nrows() - s.n_converged()).sum();
    log::info!("simulate: {runs} runs, {failed} failed");
    Ok(())
}

fn read_sites(cfg: &RunConfig, field: &FieldDataset, file: fn(usize) -> String) -> Result<Vec<SiteDataset>, CliError> {
    let s = &cfg.synth;
    (0..field.len())
        .map(|i| Ok(io::read_site(&cfg.path(&file(i)), i, field.site_x(i), s.p_u, s.j_count, s.k_count)?))
        .collect()
}

fn load_field(cfg: &RunConfig, name: &str) -> Result<FieldDataset, CliError> {
    let field = io::read_field(&cfg.path(name), cfg.synth.j_count, cfg.synth.k_count)?;
    if field.x.ncols() != cfg.synth.p_x {
        return Err(osscal::Error::Schema {
            file: cfg.path(name).display().to_string(),
            message: format!("{} x columns, p_x is {}", field.x.ncols(), cfg.synth.p_x),
        }
        .into());
    }
    Ok(field)
}

/// Training sites and field data.
fn load_training(cfg: &RunConfig) -> Result<(Vec<SiteDataset>, FieldDataset), CliError> {
    let field = load_field(cfg, "field.csv")?;
    let sites = read_sites(cfg, &field, site_file)?;
    Ok((sites, field))
}

fn load_campaign(cfg: &RunConfig) -> Result<Campaign, CliError> {
    let (sites, field) = load_training(cfg)?;
    let holdout = read_sites(cfg, &field, holdout_file)?;
    let new_field = load_field(cfg, "new_field.csv")?;
    let new_sites = read_sites(cfg, &new_field, new_site_file)?;
    Ok(Campaign {
        sites,
        field,
        holdout,
        new_sites,
        new_field,
    })
}

// ---------------------------------------------------------------- surrogates

pub fn fit_oss(cfg: &RunConfig) -> StageResult {
    start(cfg, "fit-oss")?;
    let c = load_campaign(cfg)?;
    let ens = oss::build_oss(&c.sites, cfg.synth.j_count, cfg.synth.k_count, &cfg.gp())?;
    for e in &ens.errors {
        log::warn!("fit-oss: site {} left out: {}", e.site_index, e.message);
    }
    io::write_json(&cfg.path("ensemble.json"), &EnsembleRecord::from_ensemble(&ens))?;
    io::write_rows(&cfg.path("noise_levels.csv"), &oss::noise_levels(&ens))?;
    io::write_rows(&cfg.path("oos_rmse.csv"), &oss::oos_rmse(&ens, &c.holdout)?)?;
    log::info!("fit-oss: {} surrogates over {} sites", ens.fits.len(), ens.sites.len());
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct ScreeRow {
    j: usize,
    component: usize,
    var_fraction: f64,
    cumulative: f64,
}

pub fn pca(cfg: &RunConfig) -> StageResult {
    start(cfg, "pca")?;
    let (sites, field) = load_training(cfg)?;
    let (ens, bases) = pipeline::fit_pc_ensemble(cfg, &sites, &field, cfg.synth.k_count)?;
    let records: Vec<BasisRecord> = bases.iter().map(BasisRecord::from).collect();
    io::write_json(&cfg.path("basis.json"), &records)?;
    io::write_json(&cfg.path("pc_ensemble.json"), &EnsembleRecord::from_ensemble(&ens))?;
    let mut rows = Vec::new();
    for b in &bases {
        let mut cum = 0.0;
        for (c, &f) in b.var_fractions.iter().enumerate() {
            cum += f;
            rows.push(ScreeRow {
                j: b.property,
                component: c,
                var_fraction: f,
                cumulative: cum,
            });
        }
        log::info!("pca: property {} first PC explains {:.2}%", b.property, 100.0 * b.var_fractions[0]);
    }
    io::write_rows(&cfg.path("scree.csv"), &rows)?;
    Ok(())
}

fn load_bases(cfg: &RunConfig) -> Result<Vec<PcBasis>, CliError> {
    let records: Vec<BasisRecord> = io::read_json(&cfg.path("basis.json"))?;
    Ok(records.iter().map(BasisRecord::to_basis).collect::<osscal::Result<_>>()?)
}

/// PC ensemble, bases and training data as written by `pca`.
fn load_pc(cfg: &RunConfig) -> Result<(OssEnsemble, Vec<PcBasis>, Vec<SiteDataset>, FieldDataset), CliError> {
    let (sites, field) = load_training(cfg)?;
    let bases = load_bases(cfg)?;
    let record: EnsembleRecord = io::read_json(&cfg.path("pc_ensemble.json"))?;
    let ens = record.to_ensemble(&sites, &bases)?;
    Ok((ens, bases, sites, field))
}

// ---------------------------------------------------------------- calibration

/// MAP table: j (property, or -1 for the joint objective), value,
/// median_iterations, u1..u_p.
fn write_map_table(path: &Path, rows: &[(i64, &MapResult)]) -> StageResult {
    let p = rows.first().map_or(0, |r| r.1.u.len());
    let mut header = vec!["j".to_string(), "value".into(), "median_iterations".into()];
    header.extend(numbered("u", p));
    let mut m = DMatrix::zeros(rows.len(), header.len());
    for (r, (j, map)) in rows.iter().enumerate() {
        m[(r, 0)] = *j as f64;
        m[(r, 1)] = map.value;
        m[(r, 2)] = map.median_iterations();
        for (l, v) in map.u.iter().enumerate() {
            m[(r, 3 + l)] = *v;
        }
    }
    Ok(io::write_matrix(path, &header, &m)?)
}

fn read_map_table(path: &Path, p_u: usize) -> Result<Vec<(i64, Vec<f64>)>, CliError> {
    let (header, m) = io::read_matrix(path)?;
    let mut want = vec!["j".to_string(), "value".into(), "median_iterations".into()];
    want.extend(numbered("u", p_u));
    if header != want {
        return Err(osscal::Error::Schema {
            file: path.display().to_string(),
            message: format!("expected columns {}", want.join(",")),
        }
        .into());
    }
    Ok((0..m.nrows())
        .map(|r| (m[(r, 0)] as i64, (0..p_u).map(|l| m[(r, 3 + l)]).collect()))
        .collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct BiasRecord {
    property: usize,
    hyper: Option<KernelHyper>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct PosteriorRow {
    /// Property and frequency of a per-output posterior; -1 for the joint one.
    j: i64,
    k: i64,
    coord: usize,
    map: f64,
    mean: f64,
    sd: f64,
    q05: f64,
    q50: f64,
    q95: f64,
    acceptance: f64,
    proposal_sd: f64,
}

fn posterior_rows(j: i64, k: i64, map: &[f64], chain: &Chain) -> Vec<PosteriorRow> {
    chain
        .summary()
        .into_iter()
        .enumerate()
        .map(|(l, s): (usize, CoordSummary)| PosteriorRow {
            j,
            k,
            coord: l + 1,
            map: map[l],
            mean: s.mean,
            sd: s.sd,
            q05: s.q05,
            q50: s.q50,
            q95: s.q95,
            acceptance: chain.acceptance[l],
            proposal_sd: chain.proposal_sd[l],
        })
        .collect()
}

pub fn calibrate(cfg: &RunConfig, mode: CalibrateMode) -> StageResult {
    let name = match mode {
        CalibrateMode::ModularPc => "calibrate modular-pc",
        CalibrateMode::JointMap => "calibrate joint-map",
        CalibrateMode::Bayes => "calibrate bayes",
        CalibrateMode::UnivariateCompare => "calibrate univariate-compare",
    };
    start(cfg, name)?;
    let prior = cfg.prior()?;
    let gp = cfg.gp();
    match mode {
        CalibrateMode::ModularPc => {
            let (ens, bases, _, field) = load_pc(cfg)?;
            let asms = pipeline::pc1_assemblies(&ens, &bases, &field)?;
            let mut maps = Vec::new();
            for a in &asms {
                let map = calibrate::optimize_map(
                    |u| calibrate::modular_objective(u, a, &prior, &gp),
                    cfg.synth.p_u,
                    &cfg.map_options(),
                )?;
                io::write_map_trace(&cfg.path(&format!("map_trace_modular_{}.csv", a.property)), &map.trace)?;
                log::info!("{name}: property {} MAP {:?}, median {} iterations", a.property, map.u, map.median_iterations());
                maps.push((a.property as i64, map));
            }
            let rows: Vec<(i64, &MapResult)> = maps.iter().map(|(j, m)| (*j, m)).collect();
            write_map_table(&cfg.path("map_modular.csv"), &rows)?;
        }
        CalibrateMode::JointMap => {
            let (ens, bases, _, field) = load_pc(cfg)?;
            let asms = pipeline::pc1_assemblies(&ens, &bases, &field)?;
            let map = pipeline::joint_map(cfg, &asms, &prior)?;
            io::write_map_trace(&cfg.path("map_trace_joint.csv"), &map.trace)?;
            write_map_table(&cfg.path("map_joint.csv"), &[(-1, &map)])?;
            let biased = pipeline::with_bias_at(&asms, &map.u, &gp)?;
            let records: Vec<BiasRecord> = biased
                .iter()
                .map(|a| BiasRecord {
                    property: a.property,
                    hyper: a.bias().cloned(),
                })
                .collect();
            io::write_json(&cfg.path("bias_hypers.json"), &records)?;
            log::info!("{name}: MAP {:?}, median {} iterations", map.u, map.median_iterations());
        }
        CalibrateMode::Bayes => {
            let (ens, bases, _, field) = load_pc(cfg)?;
            let map_u = read_joint_map(cfg)?;
            let records: Vec<BiasRecord> = io::read_json(&cfg.path("bias_hypers.json"))?;
            let asms = pipeline::pc1_assemblies(&ens, &bases, &field)?;
            let asms = attach_bias(cfg, asms, &records)?;
            let chain = pipeline::sample(cfg, &asms, &prior, &map_u, cfg.mcmc_samples)?;
            io::write_chain(&cfg.path("chain.csv"), &chain)?;
            io::write_rows(&cfg.path("posterior_summary.csv"), &posterior_rows(-1, -1, &map_u, &chain))?;
            log::info!("{name}: acceptance {:?}, posterior mean {:?}", chain.acceptance, chain.mean());
        }
        CalibrateMode::UnivariateCompare => {
            let (sites, field) = load_training(cfg)?;
            let record: EnsembleRecord = io::read_json(&cfg.path("ensemble.json"))?;
            let ens = record.to_ensemble(&sites, &[])?;
            let asms = pipeline::raw_assemblies(&ens, &field)?;
            let mut rows = Vec::new();
            for (i, a) in asms.iter().enumerate() {
                let (j, k) = (i / cfg.synth.k_count, i % cfg.synth.k_count);
                let map = calibrate::optimize_map(
                    |u| calibrate::modular_objective(u, a, &prior, &gp),
                    cfg.synth.p_u,
                    &cfg.map_options(),
                )?;
                let biased = pipeline::with_bias_at(std::slice::from_ref(a), &map.u, &pipeline::bias_config(&gp, i))?;
                let chain = pipeline::sample(cfg, &biased, &prior, &map.u, cfg.univariate_samples)?;
                rows.extend(posterior_rows(j as i64, k as i64, &map.u, &chain));
            }
            io::write_rows(&cfg.path("univariate_posteriors.csv"), &rows)?;
        }
    }
    Ok(())
}

fn read_joint_map(cfg: &RunConfig) -> Result<Vec<f64>, CliError> {
    let path = cfg.path("map_joint.csv");
    let rows = read_map_table(&path, cfg.synth.p_u)?;
    match rows.into_iter().next() {
        Some((_, u)) => Ok(u),
        None => Err(osscal::Error::Schema {
            file: path.display().to_string(),
            message: "no rows".into(),
        }
        .into()),
    }
}

fn attach_bias(cfg: &RunConfig, asms: Vec<KohAssembly>, records: &[BiasRecord]) -> Result<Vec<KohAssembly>, CliError> {
    asms.into_iter()
        .map(|a| {
            let rec = records.iter().find(|r| r.property == a.property).ok_or_else(|| osscal::Error::Schema {
                file: cfg.path("bias_hypers.json").display().to_string(),
                message: format!("no entry for property {}", a.property),
            })?;
            Ok(a.with_bias(rec.hyper.clone())?)
        })
        .collect()
}

// ---------------------------------------------------------------- prediction

/// Prediction models with and without bias correction, built at the
/// posterior mean, plus the draws to mix over.
fn prediction_models(cfg: &RunConfig) -> Result<(OssEnsemble, Vec<PcBasis>, [PredictionModel; 2], Vec<Vec<f64>>), CliError> {
    let (ens, bases, _, field) = load_pc(cfg)?;
    let chain = io::read_chain(&cfg.path("chain.csv"))?;
    if chain.dim() != cfg.synth.p_u {
        return Err(osscal::Error::Schema {
            file: cfg.path("chain.csv").display().to_string(),
            message: format!("{} u columns, p_u is {}", chain.dim(), cfg.synth.p_u),
        }
        .into());
    }
    let u_ref = chain.mean();
    let draws = pipeline::chain_draws(&chain, cfg.predict_samples);
    let gp = cfg.gp();
    let with = PredictionModel::build(&ens, &bases, &field, &u_ref, &gp, true)?;
    let without = PredictionModel::build(&ens, &bases, &field, &u_ref, &gp, false)?;
    Ok((ens, bases, [with, without], draws))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct PredictionRow {
    site: usize,
    with_bias: bool,
    j: usize,
    k: usize,
    mean: f64,
    var: f64,
    expected_var: f64,
    var_of_mean: f64,
    lo95: f64,
    hi95: f64,
    observed: f64,
}

pub fn predict(cfg: &RunConfig) -> StageResult {
    start(cfg, "predict")?;
    let (ens, bases, models, draws) = prediction_models(cfg)?;
    let new_field = load_field(cfg, "new_field.csv")?;
    let new_sites = read_sites(cfg, &new_field, new_site_file)?;
    let mut rows = Vec::new();
    for site in &new_sites {
        let fits = ens.fit_new_site(site, &bases, cfg.synth.k_count, &cfg.gp())?;
        for model in &models {
            let pred = model.predict_new(&site.x, &fits, &draws)?;
            for o in &pred.outputs {
                let (lo95, hi95) = o.interval95();
                let col = osscal::simulator::output_column(o.j, o.k, cfg.synth.k_count);
                rows.push(PredictionRow {
                    site: site.site_index,
                    with_bias: model.with_bias,
                    j: o.j,
                    k: o.k,
                    mean: o.mean,
                    var: o.var,
                    expected_var: o.expected_var,
                    var_of_mean: o.var_of_mean,
                    lo95,
                    hi95,
                    observed: new_field.y[(site.site_index, col)],
                });
            }
        }
    }
    io::write_rows(&cfg.path("predictions.csv"), &rows)?;
    Ok(())
}

pub fn loocv(cfg: &RunConfig) -> StageResult {
    start(cfg, "loocv")?;
    let (_, _, models, draws) = prediction_models(cfg)?;
    for model in &models {
        let res = model.loocv(&draws)?;
        let suffix = if model.with_bias { "" } else { "_nobias" };
        io::write_rows(&cfg.path(&format!("loocv_rmse{suffix}.csv")), &res.rmse)?;
        io::write_rows(&cfg.path(&format!("loocv_sites{suffix}.csv")), &res.sites)?;
        log::info!(
            "loocv: with_bias={} coverage {:.3}, mean interval width {:.4}",
            model.with_bias,
            res.coverage(),
            res.mean_interval_width()
        );
    }
    Ok(())
}

// ---------------------------------------------------------------- report

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct ScreeSummary {
    j: usize,
    pc1: f64,
    pc2: f64,
    rest: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct FiveNumber {
    j: usize,
    k: usize,
    min: f64,
    q25: f64,
    median: f64,
    q75: f64,
    max: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct LooSummary {
    j: usize,
    k: usize,
    rmse_bias: f64,
    rmse_nobias: f64,
    coverage_bias: f64,
    coverage_nobias: f64,
}

/// Linear-interpolation quantile of sorted values.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

fn five_numbers(rows: &[FitDiagnostic]) -> Vec<FiveNumber> {
    let mut groups: BTreeMap<(usize, usize), Vec<f64>> = BTreeMap::new();
    for r in rows {
        groups.entry((r.j, r.k)).or_default().push(r.value);
    }
    groups
        .into_iter()
        .map(|((j, k), mut v)| {
            v.sort_by(f64::total_cmp);
            FiveNumber {
                j,
                k,
                min: v[0],
                q25: quantile(&v, 0.25),
                median: quantile(&v, 0.5),
                q75: quantile(&v, 0.75),
                max: v[v.len() - 1],
            }
        })
        .collect()
}

fn coverage_by_cell(sites: &[LooSite]) -> BTreeMap<(usize, usize), f64> {
    let mut acc: BTreeMap<(usize, usize), (usize, usize)> = BTreeMap::new();
    for s in sites {
        let e = acc.entry((s.j, s.k)).or_default();
        e.0 += usize::from(s.lo95 <= s.observed && s.observed <= s.hi95);
        e.1 += 1;
    }
    acc.into_iter().map(|(key, (hit, n))| (key, hit as f64 / n as f64)).collect()
}

/// Tables from the earlier stages, regrouped for plotting.
pub fn report(cfg: &RunConfig) -> StageResult {
    start(cfg, "report")?;
    let scree: Vec<ScreeRow> = io::read_rows(&cfg.path("scree.csv"))?;
    let mut by_j: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
    for r in &scree {
        by_j.entry(r.j).or_default().push(r.var_fraction);
    }
    let scree_rows: Vec<ScreeSummary> = by_j
        .into_iter()
        .map(|(j, f)| ScreeSummary {
            j,
            pc1: f[0],
            pc2: f.get(1).copied().unwrap_or(0.0),
            rest: f.iter().skip(2).sum(),
        })
        .collect();
    io::write_rows(&cfg.path("report_scree.csv"), &scree_rows)?;

    let noise: Vec<FitDiagnostic> = io::read_rows(&cfg.path("noise_levels.csv"))?;
    io::write_rows(&cfg.path("report_noise.csv"), &five_numbers(&noise))?;
    let rmse: Vec<FitDiagnostic> = io::read_rows(&cfg.path("oos_rmse.csv"))?;
    io::write_rows(&cfg.path("report_oos_rmse.csv"), &five_numbers(&rmse))?;

    let mut posterior: Vec<PosteriorRow> = io::read_rows(&cfg.path("posterior_summary.csv"))?;
    for (j, u) in read_map_table(&cfg.path("map_modular.csv"), cfg.synth.p_u)? {
        for (l, v) in u.iter().enumerate() {
            posterior.push(PosteriorRow {
                j,
                k: -1,
                coord: l + 1,
                map: *v,
                mean: f64::NAN,
                sd: f64::NAN,
                q05: f64::NAN,
                q50: f64::NAN,
                q95: f64::NAN,
                acceptance: f64::NAN,
                proposal_sd: f64::NAN,
            });
        }
    }
    io::write_rows(&cfg.path("report_posterior.csv"), &posterior)?;

    let with: Vec<LooRmse> = io::read_rows(&cfg.path("loocv_rmse.csv"))?;
    let without: Vec<LooRmse> = io::read_rows(&cfg.path("loocv_rmse_nobias.csv"))?;
    let cov_with = coverage_by_cell(&io::read_rows::<LooSite>(&cfg.path("loocv_sites.csv"))?);
    let cov_without = coverage_by_cell(&io::read_rows::<LooSite>(&cfg.path("loocv_sites_nobias.csv"))?);
    let mut loo = Vec::new();
    for a in &with {
        let b = without.iter().find(|b| (b.j, b.k) == (a.j, a.k)).ok_or_else(|| osscal::Error::Schema {
            file: cfg.path("loocv_rmse_nobias.csv").display().to_string(),
            message: format!("no row for j={}, k={}", a.j, a.k),
        })?;
        loo.push(LooSummary {
            j: a.j,
            k: a.k,
            rmse_bias: a.rmse,
            rmse_nobias: b.rmse,
            coverage_bias: cov_with.get(&(a.j, a.k)).copied().unwrap_or(f64::NAN),
            coverage_nobias: cov_without.get(&(a.j, a.k)).copied().unwrap_or(f64::NAN),
        });
    }
    io::write_rows(&cfg.path("report_loocv.csv"), &loo)?;
    Ok(())
}

/// Every stage in order.
pub fn run_all(cfg: &RunConfig) -> StageResult {
    design(cfg)?;
    simulate(cfg)?;
    fit_oss(cfg)?;
    pca(cfg)?;
    calibrate(cfg, CalibrateMode::ModularPc)?;
    calibrate(cfg, CalibrateMode::JointMap)?;
    calibrate(cfg, CalibrateMode::Bayes)?;
    calibrate(cfg, CalibrateMode::UnivariateCompare)?;
    predict(cfg)?;
    loocv(cfg)?;
    report(cfg)
}
