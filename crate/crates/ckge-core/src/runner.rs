//! Config-driven experiment pipeline behind the CLI.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::continual::{run_continual_observed, StrategyConfig};
use crate::error::{Error, Result};
use crate::eval::{
    aggregate_final, build_forgetting_report, bwt, cf, markdown_summary, omega_new,
    read_forgetting_json, read_theta_csv, theta_matrices, write_forgetting_json, write_theta_csv,
    PolicyKind, ThetaSet,
};
use crate::gradcheck;
use crate::kg::{load_snapshot_sequence, write_snapshot_sequence, SnapshotSequence};
use crate::models::{
    write_checkpoint, write_manifest, CheckpointManifest, ScoreModel, TrainConfig,
};
use crate::snapgen::{generate_snapshots, read_triple_file, validate_sequence, GrowthScenario};

pub const TOOLKIT_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "snake_case")]
pub enum DatasetSpec {
    /// kgstore directory layout on disk.
    Path(PathBuf),
    /// Generate from a base triple file before running.
    Generate {
        base: PathBuf,
        scenario: GrowthScenario,
    },
}

#[derive(Clone, Copy, PartialEq, Eq, Debug, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PolicySelection {
    Legacy,
    Corrected,
    #[default]
    Both,
}

impl std::str::FromStr for PolicySelection {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "legacy" => Ok(PolicySelection::Legacy),
            "corrected" => Ok(PolicySelection::Corrected),
            "both" => Ok(PolicySelection::Both),
            other => Err(Error::Config(format!("unknown policy selection `{other}`"))),
        }
    }
}

impl PolicySelection {
    fn wants_legacy(&self) -> bool {
        matches!(self, PolicySelection::Legacy | PolicySelection::Both)
    }

    fn wants_corrected(&self) -> bool {
        matches!(self, PolicySelection::Corrected | PolicySelection::Both)
    }
}

/// One experiment: dataset, model, strategy, seeds, outputs.
/// Unknown keys anywhere in the file are hard errors.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset: DatasetSpec,
    pub model: ScoreModel,
    #[serde(default)]
    pub training: TrainConfig,
    #[serde(default)]
    pub strategy: StrategyConfig,
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub policies: PolicySelection,
    pub output: PathBuf,
}

impl ExperimentConfig {
    pub fn from_file(path: &Path) -> Result<ExperimentConfig> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let config: ExperimentConfig = serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        if config.seeds.is_empty() {
            return Err(Error::Config("seeds must not be empty".into()));
        }
        config.model.validate()?;
        Ok(config)
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct RunManifest {
    pub toolkit_version: String,
    pub config_hash: String,
    pub seeds: Vec<u64>,
    pub n_snapshots: usize,
    /// Wall-clock start, excluded from determinism guarantees.
    pub started_unix: u64,
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct SeedSummary {
    pub seed: u64,
    pub final_mrr_legacy: Option<f64>,
    pub final_mrr_corrected: Option<f64>,
    pub bwt: Option<f64>,
    pub cf: Option<f64>,
    pub omega_new: Option<f64>,
}

#[derive(Debug, Default, Serialize)]
pub struct RunSummary {
    pub out_dir: PathBuf,
    pub seeds: Vec<SeedSummary>,
}

/// FNV-1a over the raw config bytes; stamped into the manifest so a run
/// directory can be traced back to its exact configuration.
pub fn config_hash(bytes: &[u8]) -> String {
    let mut hash: u64 = 0xcbf29ce484222325;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x100000001b3);
    }
    format!("{hash:016x}")
}

fn resolve_dataset(config: &ExperimentConfig, out_dir: &Path) -> Result<SnapshotSequence> {
    match &config.dataset {
        DatasetSpec::Path(path) => load_snapshot_sequence(path),
        DatasetSpec::Generate { base, scenario } => {
            let triples = read_triple_file(base)?;
            let seq = generate_snapshots(&triples, scenario)?;
            // Persist for reproducibility and reuse.
            let dataset_dir = out_dir.join("dataset");
            write_snapshot_sequence(&seq, &dataset_dir)?;
            Ok(seq)
        }
    }
}

/// Full pipeline: per seed, train continually, evaluate under the requested
/// protocols, and write every artifact under `output/seed_<s>/`.
pub fn cmd_run(config_path: &Path) -> Result<RunSummary> {
    let config = ExperimentConfig::from_file(config_path)?;
    let raw = std::fs::read(config_path).map_err(|e| Error::io(config_path, e))?;
    let out_dir = config.output.clone();
    std::fs::create_dir_all(&out_dir).map_err(|e| Error::io(&out_dir, e))?;
    let seq = resolve_dataset(&config, &out_dir)?;
    config.strategy.validate(seq.n_snapshots())?;

    let manifest = RunManifest {
        toolkit_version: TOOLKIT_VERSION.to_string(),
        config_hash: config_hash(&raw),
        seeds: config.seeds.clone(),
        n_snapshots: seq.n_snapshots(),
        started_unix: std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0),
    };
    let manifest_path = out_dir.join("manifest.json");
    std::fs::write(&manifest_path, serde_json::to_string_pretty(&manifest)?)
        .map_err(|e| Error::io(&manifest_path, e))?;

    let mut summary = RunSummary {
        out_dir: out_dir.clone(),
        seeds: Vec::new(),
    };
    for &seed in &config.seeds {
        log::info!("seed {seed}: training {} snapshots", seq.n_snapshots());
        let seed_dir = out_dir.join(format!("seed_{seed}"));
        std::fs::create_dir_all(&seed_dir).map_err(|e| Error::io(&seed_dir, e))?;
        // Checkpoints are persisted as each snapshot completes, so a numeric
        // failure later in the run keeps everything trained so far on disk.
        let model = config.model.clone();
        let mut persist = |i: usize, ckpt: &crate::models::EmbeddingStore| -> crate::Result<()> {
            write_checkpoint(ckpt, &seed_dir.join(format!("ckpt_snapshot_{i}.bin")))?;
            let manifest = CheckpointManifest {
                snapshot: i,
                n_entities: ckpt.n_entities(),
                n_relations: ckpt.n_relations(),
                dim: ckpt.dim(),
                model: model.clone(),
            };
            write_manifest(
                &manifest,
                &seed_dir.join(format!("ckpt_snapshot_{i}.manifest.json")),
            )
        };
        let run = run_continual_observed(
            &seq,
            &config.model,
            &config.strategy,
            &config.training,
            seed,
            &mut persist,
        )?;

        // Both matrices are needed for the forgetting report; only the
        // requested ones are persisted.
        let legacy = theta_matrices(&run, &seq, PolicyKind::SnapshotLocal)?;
        let corrected = theta_matrices(&run, &seq, PolicyKind::Current)?;
        if config.policies.wants_legacy() {
            write_theta_csv(&legacy, &seed_dir.join("theta_legacy.csv"))?;
        }
        if config.policies.wants_corrected() {
            write_theta_csv(&corrected, &seed_dir.join("theta_corrected.csv"))?;
        }
        let report = build_forgetting_report(&run, &seq, &legacy.mrr, &corrected.mrr)?;
        write_forgetting_json(&report, &seed_dir.join("forgetting.json"))?;
        let md = markdown_summary(&legacy.mrr, &corrected.mrr, &report);
        let md_path = seed_dir.join("summary.md");
        std::fs::write(&md_path, md).map_err(|e| Error::io(&md_path, e))?;

        summary.seeds.push(SeedSummary {
            seed,
            final_mrr_legacy: Some(aggregate_final(&legacy.mrr)),
            final_mrr_corrected: Some(aggregate_final(&corrected.mrr)),
            bwt: report.bwt,
            cf: report.cf,
            omega_new: report.omega_new,
        });
    }
    Ok(summary)
}

/// Generates a snapshot sequence from a base triple file and validates it.
pub fn cmd_generate(base: &Path, scenario: &GrowthScenario, out: &Path) -> Result<()> {
    let triples = read_triple_file(base)?;
    let seq = generate_snapshots(&triples, scenario)?;
    write_snapshot_sequence(&seq, out)?;
    let report = validate_sequence(&seq, scenario);
    for shape in &report.shapes {
        log::info!(
            "snapshot {}: +{} entities, +{} relations, +{} triples",
            shape.snapshot,
            shape.new_entities,
            shape.new_relations,
            shape.new_triples
        );
    }
    if !report.passed() {
        let failed: Vec<String> = report
            .checks
            .iter()
            .filter(|c| !c.passed)
            .map(|c| format!("{}: {}", c.name, c.detail))
            .collect();
        return Err(Error::Validation(failed.join("; ")));
    }
    Ok(())
}

/// Re-derives BWT/CF/Ω_new from the stored θ CSV and checks them against the
/// stored JSON to 1e-12 before printing the summary tables.
pub fn cmd_report(run_dir: &Path) -> Result<String> {
    let mut out = String::new();
    let mut seed_dirs: Vec<PathBuf> = std::fs::read_dir(run_dir)
        .map_err(|e| Error::io(run_dir, e))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| {
            p.is_dir()
                && p.file_name()
                    .and_then(|n| n.to_str())
                    .is_some_and(|n| n.starts_with("seed_"))
        })
        .collect();
    seed_dirs.sort();
    if seed_dirs.is_empty() {
        return Err(Error::MissingArtifact(format!(
            "{}: no seed_<n> directories",
            run_dir.display()
        )));
    }
    for seed_dir in &seed_dirs {
        let corrected_path = seed_dir.join("theta_corrected.csv");
        let corrected = read_theta_csv(&corrected_path)?;
        let legacy: Option<ThetaSet> = {
            let p = seed_dir.join("theta_legacy.csv");
            if p.exists() {
                Some(read_theta_csv(&p)?)
            } else {
                None
            }
        };
        let stored = read_forgetting_json(&seed_dir.join("forgetting.json"))?;

        // Independent recomputation from the CSV.
        let tol = 1e-12;
        let check = |name: &str, stored: Option<f64>, recomputed: Option<f64>| -> Result<()> {
            match (stored, recomputed) {
                (None, None) => Ok(()),
                (Some(a), Some(b)) if (a - b).abs() <= tol => Ok(()),
                (a, b) => Err(Error::Validation(format!(
                    "{}: stored {name} = {a:?} but the θ CSV gives {b:?}",
                    seed_dir.display()
                ))),
            }
        };
        check("bwt", stored.bwt, bwt(&corrected.mrr).ok())?;
        check("cf", stored.cf, cf(&corrected.mrr).ok())?;
        let omega = (corrected.mrr.last() >= 1).then(|| omega_new(&corrected.mrr));
        check("omega_new", stored.omega_new, omega)?;

        out.push_str(&format!("## {}\n\n", seed_dir.display()));
        if let Some(legacy) = &legacy {
            out.push_str(&markdown_summary(&legacy.mrr, &corrected.mrr, &stored));
        } else {
            out.push_str(&format!(
                "corrected final MRR {:.4} | BWT {:?} | CF {:?}\n",
                aggregate_final(&corrected.mrr),
                stored.bwt,
                stored.cf
            ));
        }
        out.push('\n');
    }
    Ok(out)
}

/// Finite-difference verification of every gradient path; errors when any
/// coordinate disagrees.
pub fn cmd_gradcheck(instances: usize, seed: u64) -> Result<String> {
    let report = gradcheck::run_full_suite(instances, seed)?;
    let mut out = format!(
        "checked {} coordinates over {} cases\n",
        report.coordinates_checked, report.cases_run
    );
    if report.passed() {
        out.push_str("all gradients match central finite differences\n");
        Ok(out)
    } else {
        for f in report.failures.iter().take(20) {
            out.push_str(&format!(
                "FAIL {} {}: analytic {} vs fd {}\n",
                f.case, f.coordinate, f.analytic, f.finite_diff
            ));
        }
        Err(Error::Numeric(format!(
            "{} gradient mismatches\n{out}",
            report.failures.len()
        )))
    }
}
