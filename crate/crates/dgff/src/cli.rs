//! Experiment driver: declarative run specs, artifact persistence, seeds,
//! and report emission. The `dgff` binary is a thin argument parser over
//! [`run`].

use crate::barrier::{
    bent_barrier_density_mc, no_cross_probability, no_cross_probability_mc,
    reflection_density_integral, BarrierSpec,
};
use crate::error::DgffError;
use crate::extremes::{max_ensemble, tail_fit, ArgmaxDensity, DistanceKind};
use crate::field::ModelTag;
use crate::green::green_entries_fast;
use crate::hierarchical::{
    covariance_sandwich_gff, covariance_sandwich_mbrw, empirical_comparison_checks,
    mbrw_covariance_exact, sample_mbrw, sample_mbrw_naive,
};
use crate::io;
use crate::lattice::{BoxSpec, SubBoxPartition};
use crate::limitlaw::{calibrate, compare, LimitLawConfig, LimitSampler};
use crate::sampler::{decompose, sample_gff_spectral};
use crate::{Result, LEVEL_VARIANCE};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

pub use crate::io::load_law;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Sample,
    Ensemble,
    Tail,
    Decompose,
    HierarchyCheck,
    Barrier,
    Limitlaw,
    Compare,
}

/// Declarative description of one experiment run.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub command: Command,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub model: Option<ModelTag>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reps: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub z_min: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub z_max: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub master_seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
    pub out_dir: PathBuf,
    #[serde(default)]
    pub force: bool,
    #[serde(default)]
    pub csv: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub law_a: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub law_b: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ensemble_a: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ensemble_b: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub params: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub draws: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_ref: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub y: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sigma: Option<f64>,
    #[serde(default)]
    pub bent: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bent_c: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub paths: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub step: Option<f64>,
}

impl ExperimentSpec {
    pub fn new(command: Command, out_dir: impl Into<PathBuf>) -> Self {
        ExperimentSpec {
            command,
            model: None,
            n: None,
            k: None,
            delta: None,
            reps: None,
            z_min: None,
            z_max: None,
            master_seed: None,
            workers: None,
            out_dir: out_dir.into(),
            force: false,
            csv: false,
            law_a: None,
            law_b: None,
            ensemble_a: None,
            ensemble_b: None,
            params: None,
            draws: None,
            n_ref: None,
            t: None,
            y: None,
            sigma: None,
            bent: false,
            bent_c: None,
            paths: None,
            step: None,
        }
    }

    /// Merge a flat `key = value` config file under the explicit settings
    /// (command-line values win).
    pub fn apply_config(&mut self, map: &BTreeMap<String, String>) -> Result<()> {
        let parse_err =
            |k: &str, v: &str| DgffError::Format(format!("config key `{k}`: bad value `{v}`"));
        for (key, value) in map {
            match key.as_str() {
                "model" => {
                    if self.model.is_none() {
                        self.model = Some(
                            ModelTag::parse(value).ok_or_else(|| parse_err(key, value))?,
                        );
                    }
                }
                "n" => merge(&mut self.n, value, &parse_err, key)?,
                "k" => merge(&mut self.k, value, &parse_err, key)?,
                "delta" => merge(&mut self.delta, value, &parse_err, key)?,
                "reps" => merge(&mut self.reps, value, &parse_err, key)?,
                "z_min" => merge(&mut self.z_min, value, &parse_err, key)?,
                "z_max" => merge(&mut self.z_max, value, &parse_err, key)?,
                "seed" => merge(&mut self.master_seed, value, &parse_err, key)?,
                "workers" => merge(&mut self.workers, value, &parse_err, key)?,
                "draws" => merge(&mut self.draws, value, &parse_err, key)?,
                "n_ref" => merge(&mut self.n_ref, value, &parse_err, key)?,
                _ => {
                    return Err(DgffError::Format(format!("unknown config key `{key}`")));
                }
            }
        }
        Ok(())
    }
}

fn merge<T: std::str::FromStr>(
    slot: &mut Option<T>,
    value: &str,
    err: &dyn Fn(&str, &str) -> DgffError,
    key: &str,
) -> Result<()> {
    if slot.is_none() {
        *slot = Some(value.parse().map_err(|_| err(key, value))?);
    }
    Ok(())
}

/// Parse a TOML-like flat `key = value` file (# comments allowed).
pub fn parse_config(text: &str) -> Result<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return Err(DgffError::Format(format!(
                "config line {} is not `key = value`",
                lineno + 1
            )));
        };
        map.insert(
            k.trim().to_string(),
            v.trim().trim_matches('"').to_string(),
        );
    }
    Ok(map)
}

/// Run manifest; the only artifact carrying wall-clock provenance.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Manifest {
    pub schema: String,
    pub spec: ExperimentSpec,
    pub crate_version: String,
    pub wall_ms: u128,
    pub artifacts: Vec<String>,
}

fn require<T: Copy>(v: Option<T>, what: &str) -> Result<T> {
    v.ok_or_else(|| DgffError::Parameter(format!("missing required option `{what}`")))
}

/// Pre-run validation; failures here are usage errors (exit code 2).
pub fn validate(spec: &ExperimentSpec) -> Result<()> {
    use Command::*;
    let randomized = matches!(
        spec.command,
        Sample | Ensemble | Decompose | HierarchyCheck | Barrier | Limitlaw
    );
    if randomized && spec.master_seed.is_none() {
        return Err(DgffError::Parameter(
            "randomized commands require an explicit --seed".into(),
        ));
    }
    match spec.command {
        Sample | Ensemble => {
            require(spec.model, "--model")?;
            require(spec.n, "--n")?;
            if spec.command == Ensemble {
                require(spec.reps, "--reps")?;
            }
        }
        Tail => {
            if spec.law_a.is_none() {
                return Err(DgffError::Parameter("tail requires --law".into()));
            }
            require(spec.z_min, "--z-min")?;
            require(spec.z_max, "--z-max")?;
        }
        Decompose => {
            require(spec.n, "--n")?;
            require(spec.k, "--k")?;
        }
        HierarchyCheck => {
            require(spec.n, "--n")?;
        }
        Barrier => {
            require(spec.t, "--t")?;
            require(spec.y, "--y")?;
        }
        Limitlaw => {
            require(spec.k, "--k")?;
            require(spec.delta, "--delta")?;
            if spec.params.is_none() && (spec.ensemble_a.is_none() || spec.ensemble_b.is_none()) {
                return Err(DgffError::Parameter(
                    "limitlaw needs --params or two --ensemble-* directories".into(),
                ));
            }
        }
        Compare => {
            if spec.law_a.is_none() {
                return Err(DgffError::Parameter("compare requires --law-a".into()));
            }
            if spec.law_b.is_none() && spec.params.is_none() {
                return Err(DgffError::Parameter(
                    "compare requires --law-b or --params".into(),
                ));
            }
            if spec.params.is_some() && spec.master_seed.is_none() {
                return Err(DgffError::Parameter(
                    "compare against a limit law draws samples; --seed required".into(),
                ));
            }
        }
    }
    Ok(())
}

struct OutDir<'a> {
    dir: &'a Path,
    force: bool,
    artifacts: Vec<String>,
}

impl<'a> OutDir<'a> {
    fn new(dir: &'a Path, force: bool) -> Result<Self> {
        std::fs::create_dir_all(dir)?;
        Ok(OutDir {
            dir,
            force,
            artifacts: Vec::new(),
        })
    }

    /// Reserve an output path, refusing to overwrite without --force.
    fn path(&mut self, name: &str) -> Result<PathBuf> {
        let p = self.dir.join(name);
        if p.exists() && !self.force {
            return Err(DgffError::Parameter(format!(
                "refusing to overwrite {} (pass --force)",
                p.display()
            )));
        }
        self.artifacts.push(name.to_string());
        Ok(p)
    }
}

fn workers_from_env(spec: &ExperimentSpec) -> Option<usize> {
    spec.workers.or_else(|| {
        std::env::var("DGFF_WORKERS")
            .ok()
            .and_then(|v| v.parse().ok())
    })
}

/// Execute a validated spec; returns the manifest written to the output
/// directory.
pub fn run(spec: &ExperimentSpec) -> Result<Manifest> {
    validate(spec)?;
    let start = std::time::Instant::now();
    let mut out = OutDir::new(&spec.out_dir, spec.force)?;
    match spec.command {
        Command::Sample => run_sample(spec, &mut out)?,
        Command::Ensemble => run_ensemble(spec, &mut out)?,
        Command::Tail => run_tail(spec, &mut out)?,
        Command::Decompose => run_decompose(spec, &mut out)?,
        Command::HierarchyCheck => run_hierarchy_check(spec, &mut out)?,
        Command::Barrier => run_barrier(spec, &mut out)?,
        Command::Limitlaw => run_limitlaw(spec, &mut out)?,
        Command::Compare => run_compare(spec, &mut out)?,
    }
    let manifest = Manifest {
        schema: "dgff-manifest/1".into(),
        spec: spec.clone(),
        crate_version: env!("CARGO_PKG_VERSION").into(),
        wall_ms: start.elapsed().as_millis(),
        artifacts: out.artifacts.clone(),
    };
    let manifest_path = out.path("manifest.json")?;
    io::write_report(&manifest_path, &manifest)?;
    Ok(manifest)
}

fn dyadic_box(n: usize) -> Result<BoxSpec> {
    BoxSpec::new(n)
}

fn sample_by_model(model: ModelTag, b: BoxSpec, seed: u64) -> Result<crate::FieldSample> {
    match model {
        ModelTag::Gff => sample_gff_spectral(b, seed),
        ModelTag::Brw => crate::hierarchical::sample_brw(b, seed),
        ModelTag::Mbrw => sample_mbrw(b, seed),
        _ => Err(DgffError::Parameter(format!(
            "cannot sample model {model:?} directly"
        ))),
    }
}

fn run_sample(spec: &ExperimentSpec, out: &mut OutDir) -> Result<()> {
    let b = dyadic_box(require(spec.n, "--n")?)?;
    let field = sample_by_model(
        require(spec.model, "--model")?,
        b,
        require(spec.master_seed, "--seed")?,
    )?;
    let path = out.path("field.dgfg")?;
    io::write_field(&path, &field)?;
    if spec.csv {
        io::write_field_csv(&out.path("field.csv")?, &field)?;
    }
    Ok(())
}

fn run_ensemble(spec: &ExperimentSpec, out: &mut OutDir) -> Result<()> {
    let ens = max_ensemble(
        require(spec.model, "--model")?,
        require(spec.n, "--n")?,
        require(spec.reps, "--reps")?,
        require(spec.master_seed, "--seed")?,
        workers_from_env(spec),
    )?;
    io::write_law(&out.path("law.csv")?, &ens.law)?;
    io::write_argmax(&out.path("argmax.csv")?, &ens.argmax_points)?;
    Ok(())
}

fn run_tail(spec: &ExperimentSpec, out: &mut OutDir) -> Result<()> {
    let law = io::load_law(spec.law_a.as_ref().expect("validated"))?;
    let fit = tail_fit(
        &law,
        require(spec.z_min, "--z-min")?,
        require(spec.z_max, "--z-max")?,
    )?;
    io::write_report(&out.path("tail.json")?, &fit)?;
    Ok(())
}

#[derive(Serialize)]
struct DecomposeReport {
    n: usize,
    k: usize,
    delta: f64,
    reconstruction_error: f64,
    coarse_harmonicity_defect: f64,
    fine_boundary_max: f64,
}

fn run_decompose(spec: &ExperimentSpec, out: &mut OutDir) -> Result<()> {
    let n = require(spec.n, "--n")?;
    let k = require(spec.k, "--k")?;
    let delta = spec.delta.unwrap_or(0.0);
    let b = dyadic_box(n)?;
    let partition = SubBoxPartition::new(b, k, delta)?;
    let field = sample_gff_spectral(b, require(spec.master_seed, "--seed")?)?;
    let d = decompose(&field, &partition)?;
    io::write_field(&out.path("field.dgfg")?, &field)?;
    io::write_field(&out.path("coarse.dgfg")?, &d.coarse)?;
    io::write_field(&out.path("fine.dgfg")?, &d.fine)?;
    io::write_report(
        &out.path("decompose.json")?,
        &DecomposeReport {
            n,
            k,
            delta,
            reconstruction_error: d.reconstruction_error(&field),
            coarse_harmonicity_defect: d.coarse_harmonicity_defect(),
            fine_boundary_max: d.fine_boundary_max(),
        },
    )?;
    Ok(())
}

#[derive(Serialize)]
struct HierarchyReport {
    n: usize,
    point_variance_exact: f64,
    point_variance_expected: f64,
    mbrw_sandwich_dev: f64,
    mbrw_sandwich_dev_half: f64,
    gff_sandwich_dev: Option<f64>,
    prefix_equals_naive_n8: bool,
    comparison: crate::hierarchical::ComparisonReport,
}

fn run_hierarchy_check(spec: &ExperimentSpec, out: &mut OutDir) -> Result<()> {
    let n = require(spec.n, "--n")?;
    let seed = require(spec.master_seed, "--seed")?;
    let b = dyadic_box(n)?;
    let level = b.level()?;
    let reps = spec.reps.unwrap_or(2000);
    let fast = sample_mbrw(BoxSpec::new(8)?, seed)?;
    let naive = sample_mbrw_naive(BoxSpec::new(8)?, seed)?;
    // GFF sandwich via the fast Green route when the box is small enough
    let gff_sandwich_dev = if n <= 64 {
        let trim = (n as f64 / 16.0).ceil() as i64;
        let mut sites = Vec::new();
        for y in trim..(n as i64 - trim) {
            for x in trim..(n as i64 - trim) {
                sites.push((x, y));
            }
        }
        let entries = green_entries_fast(b, &sites)?;
        let index = |p: (i64, i64)| {
            let w = n as i64 - 2 * trim;
            ((p.1 - trim) * w + (p.0 - trim)) as usize
        };
        Some(covariance_sandwich_gff(b, 1.0 / 16.0, &|u, v| {
            entries[(index(u), index(v))]
        })?)
    } else {
        None
    };
    let report = HierarchyReport {
        n,
        point_variance_exact: mbrw_covariance_exact(b, (0, 0))?,
        point_variance_expected: (level as f64 + 1.0) * LEVEL_VARIANCE,
        mbrw_sandwich_dev: covariance_sandwich_mbrw(b)?,
        mbrw_sandwich_dev_half: covariance_sandwich_mbrw(BoxSpec::new(n / 2)?)?,
        gff_sandwich_dev,
        prefix_equals_naive_n8: fast.values.as_slice() == naive.values.as_slice(),
        comparison: empirical_comparison_checks(b, reps, seed)?,
    };
    io::write_report(&out.path("hierarchy.json")?, &report)?;
    Ok(())
}

#[derive(Serialize)]
struct BarrierReport {
    spec: BarrierSpec,
    closed_form_no_cross: f64,
    density_integral: f64,
    mc_no_cross: f64,
    mc_se: f64,
    bent: Option<crate::barrier::BentBarrierReport>,
}

fn run_barrier(spec: &ExperimentSpec, out: &mut OutDir) -> Result<()> {
    let t = require(spec.t, "--t")?;
    let y = require(spec.y, "--y")?;
    let sigma = spec.sigma.unwrap_or(1.0);
    let seed = require(spec.master_seed, "--seed")?;
    let paths = spec.paths.unwrap_or(200_000);
    let bspec = if spec.bent {
        BarrierSpec::bent(t, y, sigma, spec.bent_c.unwrap_or(10.0))?
    } else {
        BarrierSpec::new(t, y, sigma)?
    };
    let (mc, se) = no_cross_probability_mc(&bspec, paths, 64, seed);
    let bent = if spec.bent {
        let step = spec.step.unwrap_or(1e-3 * t);
        let sd = sigma * t.sqrt();
        let edges: Vec<f64> = (0..=24).map(|i| -3.0 * sd + i as f64 * sd / 4.0).collect();
        Some(bent_barrier_density_mc(
            &bspec,
            &edges,
            paths.max(100_000),
            step,
            seed,
        )?)
    } else {
        None
    };
    io::write_report(
        &out.path("barrier.json")?,
        &BarrierReport {
            spec: bspec,
            closed_form_no_cross: no_cross_probability(&bspec),
            density_integral: reflection_density_integral(&bspec, 1e-9),
            mc_no_cross: mc,
            mc_se: se,
            bent,
        },
    )?;
    Ok(())
}

fn load_ensemble_dir(dir: &Path) -> Result<(crate::extremes::EmpiricalLaw, ArgmaxDensity)> {
    let law = io::load_law(&dir.join("law.csv"))?;
    let points = io::load_argmax(&dir.join("argmax.csv"))?;
    let density = ArgmaxDensity::from_points(&points, 32);
    Ok((law, density))
}

#[derive(Serialize)]
struct LimitlawReport {
    k: usize,
    delta: f64,
    g_k: f64,
    alpha_star: f64,
    bernoulli_p: f64,
    snap_radius: f64,
    refinement_error: f64,
    draws: usize,
    tail_slope: Option<f64>,
}

fn run_limitlaw(spec: &ExperimentSpec, out: &mut OutDir) -> Result<()> {
    let k = require(spec.k, "--k")?;
    let delta = require(spec.delta, "--delta")?;
    let seed = require(spec.master_seed, "--seed")?;
    let draws = spec.draws.unwrap_or(20_000);
    let cfg = LimitLawConfig {
        n_ref: spec.n_ref.unwrap_or(LimitLawConfig::default().n_ref),
        ..LimitLawConfig::default()
    };
    let params = if let Some(p) = &spec.params {
        io::load_params(p)?
    } else {
        let a = load_ensemble_dir(spec.ensemble_a.as_ref().expect("validated"))?;
        let b = load_ensemble_dir(spec.ensemble_b.as_ref().expect("validated"))?;
        calibrate(&[(&a.0, &a.1), (&b.0, &b.1)], k, delta, &cfg)?
    };
    io::write_params(out.dir, &params)?;
    out.artifacts.push("params.json".into());
    out.artifacts.push("coarse_cov.dgfg".into());
    let sampler = LimitSampler::new(params)?;
    let law = sampler.law(draws, seed)?;
    io::write_law(&out.path("limit_law.csv")?, &law)?;
    // fit the tail of the law recentered by its median, so the compensator
    // sees z-values on the scale of the recentered maximum
    let tail_slope = {
        let med = law.quantile(0.5);
        let recentered = crate::extremes::EmpiricalLaw::from_samples(
            law.samples().iter().map(|v| v - med).collect(),
            law.meta.clone(),
        )?;
        let z_min = recentered.quantile(0.90);
        let z_max = recentered.quantile(0.9995);
        tail_fit(&recentered, z_min, z_max).ok().map(|f| f.slope)
    };
    io::write_report(
        &out.path("limitlaw.json")?,
        &LimitlawReport {
            k,
            delta,
            g_k: sampler.params.g_k,
            alpha_star: sampler.params.alpha_star,
            bernoulli_p: sampler.params.bernoulli_p(),
            snap_radius: sampler.params.coarse.snap_radius,
            refinement_error: sampler.params.coarse.refinement_error,
            draws,
            tail_slope,
        },
    )?;
    Ok(())
}

#[derive(Serialize)]
struct CompareLawsReport {
    levy: f64,
    ks: f64,
}

fn run_compare(spec: &ExperimentSpec, out: &mut OutDir) -> Result<()> {
    let a = io::load_law(spec.law_a.as_ref().expect("validated"))?;
    if let Some(pb) = &spec.law_b {
        let b = io::load_law(pb)?;
        let report = CompareLawsReport {
            levy: crate::extremes::distance(&a, &b, DistanceKind::Levy),
            ks: crate::extremes::distance(&a, &b, DistanceKind::Ks),
        };
        io::write_report(&out.path("compare.json")?, &report)?;
    } else {
        let params = io::load_params(spec.params.as_ref().expect("validated"))?;
        let sampler = LimitSampler::new(params)?;
        let report = compare(
            &a,
            &sampler,
            spec.draws.unwrap_or(20_000),
            require(spec.master_seed, "--seed")?,
        )?;
        io::write_report(&out.path("compare.json")?, &report)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_parsing_and_merge() {
        let map = parse_config("n = 32\nreps = 100 # comment\nmodel = \"gff\"\n").unwrap();
        let mut spec = ExperimentSpec::new(Command::Ensemble, "/tmp/x");
        spec.n = Some(64); // CLI wins
        spec.apply_config(&map).unwrap();
        assert_eq!(spec.n, Some(64));
        assert_eq!(spec.reps, Some(100));
        assert_eq!(spec.model, Some(ModelTag::Gff));
        assert!(parse_config("nonsense line\n").is_err());
        let bad = parse_config("bogus_key = 1\n").unwrap();
        assert!(spec.apply_config(&bad).is_err());
    }

    #[test]
    fn validate_requires_seed() {
        let spec = ExperimentSpec {
            model: Some(ModelTag::Gff),
            n: Some(16),
            reps: Some(10),
            ..ExperimentSpec::new(Command::Ensemble, "/tmp/x")
        };
        assert!(matches!(validate(&spec), Err(DgffError::Parameter(_))));
    }

    #[test]
    fn overwrite_guard() {
        let dir = tempfile::tempdir().unwrap();
        let spec = ExperimentSpec {
            model: Some(ModelTag::Gff),
            n: Some(8),
            master_seed: Some(1),
            ..ExperimentSpec::new(Command::Sample, dir.path())
        };
        run(&spec).unwrap();
        // second run without --force refuses
        assert!(matches!(run(&spec), Err(DgffError::Parameter(_))));
        let forced = ExperimentSpec {
            force: true,
            ..spec
        };
        run(&forced).unwrap();
    }
}
