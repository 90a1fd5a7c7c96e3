//! The four commands behind the `core-reft` binary.

use std::path::Path;
use std::time::Instant;

use serde::Serialize;

use crate::cli::config::{load_dataset, ExperimentConfig, LoadedData};
use crate::cli::output::{
    alpha_group, write_matrix_csv, write_results_csv, write_summary_json, MatrixRow, ResultRow,
    RunSummary, SummaryFile,
};
use crate::continual::{
    run_scenario, save_run, RunSpec, Scenario, TaskStream, TrainHyper,
};
use crate::data::{imbalance_sample, split_domains, split_tasks, ImbalanceSpec};
use crate::error::{CoreError, Result};
use crate::linalg::SeededRng;
use crate::nn::{load_encoder, pretrain, save_encoder, FrozenEncoder};
use crate::verify::{run_all, VerifyOptions};

fn ensure_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(|e| CoreError::io(path.display().to_string(), e))
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes).map_err(|e| CoreError::io(path.display().to_string(), e))
}

#[derive(Serialize)]
struct PretrainSummary {
    val_accuracy: f64,
    chance_accuracy: f64,
    epoch_losses: Vec<f64>,
    steps: usize,
    total_params: usize,
    checksum: String,
    checkpoint: String,
}

/// `core-reft pretrain`: train the backbone on the base distribution,
/// write an encoder checkpoint plus a JSON summary.
pub fn cmd_pretrain(config: &ExperimentConfig, config_dir: &Path) -> Result<()> {
    if config.encoder.checkpoint.is_some() {
        return Err(CoreError::Config(
            "pretrain builds a new checkpoint; remove encoder.checkpoint".into(),
        ));
    }
    ensure_dir(&config.out_dir)?;
    let data = load_dataset(&config.dataset, config_dir)?;
    // synthetic cil streams carry a dedicated base set; otherwise the
    // loaded dataset itself is the pretraining distribution
    let base = data.base.unwrap_or(data.downstream);
    let enc_cfg = config.encoder.to_config();
    let (encoder, report) = pretrain(&enc_cfg, &base, &config.pretrain)?;

    let ckpt_path = config.out_dir.join("encoder.bin");
    write_bytes(&ckpt_path, &save_encoder(&encoder)?)?;
    let summary = PretrainSummary {
        val_accuracy: report.val_accuracy,
        chance_accuracy: 1.0 / base.num_classes as f64,
        epoch_losses: report.epoch_losses,
        steps: report.steps,
        total_params: encoder.total_param_count(),
        checksum: format!("{:016x}", encoder.param_checksum()),
        checkpoint: ckpt_path.display().to_string(),
    };
    let summary_path = config.out_dir.join("pretrain_summary.json");
    write_bytes(&summary_path, serde_json::to_string_pretty(&summary)?.as_bytes())?;
    println!(
        "pretrained encoder: {} params, val accuracy {:.1}% (chance {:.1}%) -> {}",
        summary.total_params,
        100.0 * summary.val_accuracy,
        100.0 * summary.chance_accuracy,
        ckpt_path.display()
    );
    Ok(())
}

fn acquire_encoder(
    config: &ExperimentConfig,
    data: &LoadedData,
    config_dir: &Path,
) -> Result<FrozenEncoder> {
    if let Some(ckpt) = &config.encoder.checkpoint {
        let resolved = if ckpt.is_absolute() {
            ckpt.clone()
        } else {
            config_dir.join(ckpt)
        };
        let bytes = std::fs::read(&resolved)
            .map_err(|e| CoreError::io(resolved.display().to_string(), e))?;
        return load_encoder(&bytes);
    }
    match &data.base {
        Some(base) => Ok(pretrain(&config.encoder.to_config(), base, &config.pretrain)?.0),
        None => Err(CoreError::Config(
            "no encoder.checkpoint and the dataset provides no base set; \
             run `core-reft pretrain` first"
                .into(),
        )),
    }
}

fn build_stream(config: &ExperimentConfig, data: &LoadedData, seed: u64) -> Result<TaskStream> {
    match config.scenario {
        Scenario::Dil => split_domains(&data.downstream, seed),
        scenario => split_tasks(
            &data.downstream,
            config
                .classes_per_task
                .ok_or_else(|| CoreError::Config("classes_per_task required".into()))?,
            seed,
            scenario,
        ),
    }
}

/// Subsample every task's train split to the imbalance profile. M is
/// the smallest per-class count in that split (the balanced count).
fn apply_imbalance(stream: &mut TaskStream, alpha: f64, seed: u64) -> Result<()> {
    for task in &mut stream.tasks {
        let counts = task.train.indices_by_class();
        let m = counts
            .iter()
            .filter(|rows| !rows.is_empty())
            .map(|rows| rows.len())
            .min()
            .unwrap_or(0);
        if m == 0 {
            return Err(CoreError::EmptyInput("imbalance: task train split empty"));
        }
        let spec = ImbalanceSpec {
            alpha,
            base_count: m,
        };
        let sub_seed = SeededRng::new(seed).derive(500 + task.task_id as u64).seed();
        task.train = imbalance_sample(&task.train, &spec, sub_seed)?;
    }
    Ok(())
}

fn alpha_label(alpha: f64) -> String {
    format!("{alpha}")
}

pub struct RunArtifacts {
    pub rows: Vec<ResultRow>,
    pub matrix: Vec<MatrixRow>,
    pub summary: SummaryFile,
}

/// Execute every (alpha, seed) cell of a run config.
pub fn execute_run(config: &ExperimentConfig, config_dir: &Path) -> Result<RunArtifacts> {
    let data = load_dataset(&config.dataset, config_dir)?;
    let encoder = acquire_encoder(config, &data, config_dir)?;
    ensure_dir(&config.out_dir)?;

    let mut rows = Vec::new();
    let mut matrix = Vec::new();
    let mut groups = Vec::new();
    for &alpha in &config.alphas {
        let mut runs = Vec::new();
        for &seed in &config.seeds {
            let started = Instant::now();
            let mut stream = build_stream(config, &data, seed)?;
            apply_imbalance(&mut stream, alpha, seed)?;
            let intervention = config.intervention.resolve(encoder.config(), seed);
            let spec = RunSpec {
                method: config.method,
                intervention: intervention.clone(),
                dil_kmeans_k: config.dil_kmeans_k,
                similarity: config.similarity,
            };
            let hyper = TrainHyper {
                seed,
                ..config.hyper.clone()
            };
            let outcome = run_scenario(&encoder, &spec, &stream, &hyper)?;
            let wall_time_s = started.elapsed().as_secs_f64();

            let run_id = format!(
                "{}-{}-r{}-l{}-a{}-s{}",
                config.scenario,
                config.method,
                intervention.rank,
                intervention
                    .layers
                    .iter()
                    .map(|l| l.to_string())
                    .collect::<Vec<_>>()
                    .join("_"),
                alpha_label(alpha),
                seed
            );
            for (i, (&last, &avg)) in outcome
                .metrics
                .last()
                .iter()
                .zip(outcome.metrics.avg())
                .enumerate()
            {
                rows.push(ResultRow {
                    run_id: run_id.clone(),
                    seed,
                    scenario: config.scenario,
                    rank: intervention.rank,
                    layers: intervention.layers.clone(),
                    alpha,
                    stage: i + 1,
                    last,
                    avg,
                    params: outcome.trainable_params,
                    wall_time_s,
                });
            }
            for (t, row) in outcome.per_task_matrix.iter().enumerate() {
                for (task, &acc) in row.iter().enumerate() {
                    matrix.push(MatrixRow {
                        run_id: run_id.clone(),
                        seed,
                        alpha,
                        stage: t + 1,
                        task: task + 1,
                        accuracy: acc,
                    });
                }
            }
            runs.push(RunSummary {
                seed,
                last: outcome.metrics.final_last().unwrap_or(0.0),
                avg: outcome.metrics.final_avg().unwrap_or(0.0),
                params: outcome.trainable_params,
                stages: outcome.metrics.stages(),
            });
            write_bytes(
                &config.out_dir.join(format!("{run_id}.corerun")),
                &save_run(config.scenario, &outcome.model)?,
            )?;
        }
        groups.push(alpha_group(alpha, runs));
    }
    Ok(RunArtifacts {
        rows,
        matrix,
        summary: SummaryFile {
            scenario: config.scenario,
            method: config.method,
            groups,
        },
    })
}

/// `core-reft run`: execute the protocol for every seed and alpha,
/// writing results.csv, matrix.csv, summary.json, and run bundles.
pub fn cmd_run(config: &ExperimentConfig, config_dir: &Path) -> Result<()> {
    let artifacts = execute_run(config, config_dir)?;
    write_results_csv(&config.out_dir.join("results.csv"), &artifacts.rows)?;
    write_matrix_csv(&config.out_dir.join("matrix.csv"), &artifacts.matrix)?;
    write_summary_json(&config.out_dir.join("summary.json"), &artifacts.summary)?;
    for group in &artifacts.summary.groups {
        println!(
            "alpha {}: Avg {:.2} +/- {:.2}, Last {:.2} +/- {:.2} over {} seed(s)",
            group.alpha,
            group.avg_mean,
            group.avg_std,
            group.last_mean,
            group.last_std,
            group.runs.len()
        );
    }
    println!("results -> {}", config.out_dir.join("results.csv").display());
    Ok(())
}

/// Sweep axes; defaults follow the rank/layer-count/alpha/seed grids.
#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum SweepAxis {
    Rank,
    Layers,
    Alpha,
    Seed,
}

impl std::fmt::Display for SweepAxis {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SweepAxis::Rank => "rank",
            SweepAxis::Layers => "layers",
            SweepAxis::Alpha => "alpha",
            SweepAxis::Seed => "seed",
        })
    }
}

/// Evenly spaced block indices ending at the final block.
pub fn spread_layers(depth: usize, count: usize) -> Vec<usize> {
    let count = count.clamp(1, depth);
    let mut layers: Vec<usize> = (1..=count).map(|j| j * depth / count - 1).collect();
    layers.dedup();
    layers
}

/// Layer-count grid {1,3,6,9,12} rescaled to the encoder depth.
pub fn layer_count_grid(depth: usize) -> Vec<usize> {
    let mut counts: Vec<usize> = [1usize, 3, 6, 9, 12]
        .iter()
        .map(|&c| ((c * depth + 6) / 12).clamp(1, depth))
        .collect();
    counts.dedup();
    counts
}

fn default_axis_values(axis: SweepAxis, depth: usize) -> Vec<String> {
    match axis {
        SweepAxis::Rank => vec!["4", "8", "16", "32", "64"]
            .into_iter()
            .map(String::from)
            .collect(),
        SweepAxis::Layers => layer_count_grid(depth)
            .into_iter()
            .map(|c| c.to_string())
            .collect(),
        SweepAxis::Alpha => vec!["1", "0.5", "0.1", "0.05", "0.01"]
            .into_iter()
            .map(String::from)
            .collect(),
        SweepAxis::Seed => (1991u64..=1995).map(|s| s.to_string()).collect(),
    }
}

#[derive(Serialize)]
struct SweepCellStatus {
    axis: String,
    value: String,
    status: String,
    out_dir: String,
}

fn cell_config(
    base: &ExperimentConfig,
    axis: SweepAxis,
    value: &str,
    depth: usize,
) -> Result<ExperimentConfig> {
    let mut cfg = base.clone();
    match axis {
        SweepAxis::Rank => {
            cfg.intervention.rank = Some(
                value
                    .parse()
                    .map_err(|_| CoreError::Config(format!("bad rank value {value:?}")))?,
            );
        }
        SweepAxis::Layers => {
            let count: usize = value
                .parse()
                .map_err(|_| CoreError::Config(format!("bad layer count {value:?}")))?;
            cfg.intervention.layers = Some(spread_layers(depth, count));
        }
        SweepAxis::Alpha => {
            cfg.alphas = vec![value
                .parse()
                .map_err(|_| CoreError::Config(format!("bad alpha value {value:?}")))?];
        }
        SweepAxis::Seed => {
            cfg.seeds = vec![value
                .parse()
                .map_err(|_| CoreError::Config(format!("bad seed value {value:?}")))?];
        }
    }
    cfg.out_dir = base.out_dir.join(format!("cell_{axis}_{value}"));
    Ok(cfg)
}

fn sweep_threads() -> usize {
    std::env::var("CORE_REFT_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&n| n >= 1)
        .unwrap_or(1)
}

/// `core-reft sweep`: one cmd_run per axis value, merged results,
/// continue-on-error with per-cell status.
pub fn cmd_sweep(
    config: &ExperimentConfig,
    config_dir: &Path,
    axis: SweepAxis,
    values: Option<Vec<String>>,
) -> Result<()> {
    ensure_dir(&config.out_dir)?;
    let depth = config.encoder.to_config().depth;
    let values = match values {
        Some(v) if !v.is_empty() => v,
        _ => default_axis_values(axis, depth),
    };
    let cells: Vec<ExperimentConfig> = values
        .iter()
        .map(|v| cell_config(config, axis, v, depth))
        .collect::<Result<Vec<_>>>()?;

    // cells run in parallel worker threads (capped by CORE_REFT_THREADS);
    // each is internally deterministic and merge order is by cell index
    let threads = sweep_threads().min(cells.len().max(1));
    let outcomes: std::sync::Mutex<Vec<Option<std::result::Result<RunArtifacts, String>>>> =
        std::sync::Mutex::new((0..cells.len()).map(|_| None).collect());
    let next = std::sync::atomic::AtomicUsize::new(0);
    std::thread::scope(|scope| {
        for _ in 0..threads {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, std::sync::atomic::Ordering::SeqCst);
                if i >= cells.len() {
                    break;
                }
                let result = execute_run(&cells[i], config_dir).map_err(|e| e.to_string());
                outcomes.lock().expect("outcome lock")[i] = Some(result);
            });
        }
    });
    let outcomes = outcomes.into_inner().expect("threads joined");

    let mut combined_rows = Vec::new();
    let mut statuses = Vec::new();
    let mut any_failed = false;
    for ((value, cell), outcome) in values.iter().zip(&cells).zip(outcomes) {
        let outcome = outcome.expect("every cell executed");
        let status = match outcome {
            Ok(artifacts) => {
                write_results_csv(&cell.out_dir.join("results.csv"), &artifacts.rows)?;
                write_matrix_csv(&cell.out_dir.join("matrix.csv"), &artifacts.matrix)?;
                write_summary_json(&cell.out_dir.join("summary.json"), &artifacts.summary)?;
                combined_rows.extend(artifacts.rows);
                "ok".to_string()
            }
            Err(message) => {
                any_failed = true;
                format!("error: {message}")
            }
        };
        statuses.push(SweepCellStatus {
            axis: axis.to_string(),
            value: value.clone(),
            status,
            out_dir: cell.out_dir.display().to_string(),
        });
    }
    write_results_csv(&config.out_dir.join("results.csv"), &combined_rows)?;
    write_bytes(
        &config.out_dir.join("sweep_summary.json"),
        serde_json::to_string_pretty(&statuses)?.as_bytes(),
    )?;
    for s in &statuses {
        println!("cell {}={}: {}", s.axis, s.value, s.status);
    }
    if any_failed {
        return Err(CoreError::InvalidArgument(
            "one or more sweep cells failed (see sweep_summary.json)".into(),
        ));
    }
    Ok(())
}

/// `core-reft verify`: run the property suites, write report.txt.
/// Returns whether every property passed.
pub fn cmd_verify(out_dir: &Path, opts: &VerifyOptions) -> Result<bool> {
    ensure_dir(out_dir)?;
    let report = run_all(opts)?;
    let text = report.render();
    write_bytes(&out_dir.join("report.txt"), text.as_bytes())?;
    print!("{text}");
    if !report.all_passed() {
        eprintln!("failing properties: {}", report.failing().join(", "));
    }
    Ok(report.all_passed())
}
