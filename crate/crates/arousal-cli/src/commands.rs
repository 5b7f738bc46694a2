//! Implementations behind the subcommands. Every function returns the
//! crate-wide `Result`; `main` maps the error class onto the exit code.

use std::fs;
use std::path::PathBuf;
use std::time::Instant;

use arousal_core::classifier::{
    evaluate as score_stages, ArousalState, ExclusionTally, RawStage, Stage,
};
use arousal_core::dpss::{cache_file_name, compute_tapers, sparsify_tapers, TaperSet};
use arousal_core::epoch::Epoch;
use arousal_core::io::hypnogram::{align_labels, parse_hypnogram_csv};
use arousal_core::io::{Channel, Recording};
use arousal_core::multitaper::multitaper_psd;
use arousal_core::pipeline::{EpochRecord, Pipeline, PipelineConfig};
use arousal_core::slope::{spectral_slope, SlopeFeature};
use arousal_core::synth::{synthesize_signal, SynthSpec};
use arousal_core::{Error, Result};
use rayon::prelude::*;
use serde::Serialize;

use crate::inputs::{io_at, load_recording, store_recording};
use crate::{BenchArgs, ClassifyArgs, EvaluateArgs, PsdArgs, SlopeArgs, SynthArgs, TapersArgs};

/// Writes to the requested file, or stdout when no path was given.
fn emit(output: &Option<PathBuf>, text: &str) -> Result<()> {
    match output {
        Some(path) => fs::write(path, text)?,
        None => print!("{text}"),
    }
    Ok(())
}

fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| Error::Internal(format!("report serialization failed: {e}")))?;
    text.push('\n');
    Ok(text)
}

/// Runs `work` on a dedicated pool of `threads` workers; 0 keeps the
/// default pool (all cores).
fn with_threads<T: Send>(threads: usize, work: impl FnOnce() -> T + Send) -> Result<T> {
    if threads == 0 {
        return Ok(work());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Internal(format!("thread pool construction failed: {e}")))?;
    Ok(pool.install(work))
}

/// Resamples, filters, and epochs the configured channel, insisting on at
/// least one whole epoch.
fn prepared_epochs(pipeline: &Pipeline, recording: &Recording) -> Result<Vec<Epoch>> {
    let label = &pipeline.config().channel_label;
    let channel = recording.channel(label)?;
    let epochs = pipeline.prepare_channel(channel)?;
    if epochs.is_empty() {
        return Err(Error::NoData(format!(
            "channel {label:?} holds {} samples at {} Hz, shorter than one {} s epoch",
            channel.samples.len(),
            channel.sample_rate_hz,
            pipeline.config().epoch_s
        )));
    }
    Ok(epochs)
}

/// Per-epoch records, processed in parallel but returned in epoch order.
fn staged_records(
    pipeline: &Pipeline,
    epochs: &[Epoch],
    threads: usize,
) -> Result<Vec<EpochRecord>> {
    with_threads(threads, || {
        epochs
            .par_iter()
            .enumerate()
            .map(|(index, epoch)| pipeline.process_epoch(epoch, index))
            .collect()
    })?
}

#[derive(Serialize)]
struct SparsitySummary {
    epsilon: f64,
    /// Retained entries per taper.
    nnz: Vec<usize>,
    /// Retained fraction per taper.
    density: Vec<f64>,
    worst_gram_deviation: f64,
}

#[derive(Serialize)]
struct TaperSummary {
    n_samples: usize,
    n_tapers: usize,
    half_bandwidth_hz: f64,
    sample_rate_hz: f64,
    /// Spectral concentration per taper, descending.
    eigenvalues: Vec<f64>,
    storage_bytes: usize,
    cache_file: String,
    /// Present only when a truncation threshold was configured.
    sparsity: Option<SparsitySummary>,
}

pub fn tapers(args: TapersArgs) -> Result<()> {
    let config = args.config.resolve()?;
    config.validate()?;
    let params = config.taper_params();
    let dense = compute_tapers(&params)?;
    let (set, sparsity) = if config.sparsify_epsilon > 0.0 {
        let (sparse, report) = sparsify_tapers(&dense, config.sparsify_epsilon)?;
        let density = report
            .nnz
            .iter()
            .map(|&k| k as f64 / params.n_samples as f64)
            .collect();
        let summary = SparsitySummary {
            epsilon: report.epsilon,
            nnz: report.nnz,
            density,
            worst_gram_deviation: report.worst_gram_deviation,
        };
        (sparse, Some(summary))
    } else {
        (dense, None)
    };

    fs::create_dir_all(&args.cache_dir)?;
    let cache_path = args.cache_dir.join(cache_file_name(&params));
    arousal_core::dpss::write_taper_cache(&cache_path, &set)?;
    log::info!("taper cache written to {}", cache_path.display());

    let summary = TaperSummary {
        n_samples: params.n_samples,
        n_tapers: params.n_tapers,
        half_bandwidth_hz: params.half_bandwidth_hz,
        sample_rate_hz: params.sample_rate_hz,
        eigenvalues: set.eigenvalues.clone(),
        storage_bytes: set.storage_bytes(),
        cache_file: cache_path.display().to_string(),
        sparsity,
    };
    print!("{}", to_json(&summary)?);
    Ok(())
}

#[derive(Serialize)]
struct PsdRecord<'a> {
    channel: &'a str,
    epoch_index: usize,
    start_time_s: f64,
    epoch_s: f64,
    sample_rate_hz: f64,
    n_tapers_used: usize,
    delta_f_hz: f64,
    freqs_hz: &'a [f64],
    power: &'a [f64],
}

pub fn psd(args: PsdArgs) -> Result<()> {
    let config = args.config.resolve()?;
    let pipeline = Pipeline::new(config)?;
    let recording = load_recording(&args.input)?;
    let epochs = prepared_epochs(&pipeline, &recording)?;
    let epoch = epochs.get(args.epoch).ok_or_else(|| {
        Error::InvalidSpec(format!(
            "epoch {} requested but the channel only has {}",
            args.epoch,
            epochs.len()
        ))
    })?;
    let psd = multitaper_psd(epoch, pipeline.tapers())?;

    let text = if args.json {
        to_json(&PsdRecord {
            channel: &epoch.source_channel,
            epoch_index: args.epoch,
            start_time_s: epoch.start_time_s,
            epoch_s: epoch.duration_s,
            sample_rate_hz: epoch.sample_rate_hz,
            n_tapers_used: psd.n_tapers_used,
            delta_f_hz: psd.delta_f_hz(),
            freqs_hz: &psd.freqs_hz,
            power: &psd.power,
        })?
    } else {
        let mut out = String::from("freq_hz,power\n");
        for (f, p) in psd.freqs_hz.iter().zip(&psd.power) {
            out.push_str(&format!("{f},{p}\n"));
        }
        out
    };
    emit(&args.output, &text)
}

pub fn slope(args: SlopeArgs) -> Result<()> {
    let config = args.config.resolve()?;
    let pipeline = Pipeline::new(config)?;
    let recording = load_recording(&args.input)?;
    let epochs = prepared_epochs(&pipeline, &recording)?;
    let fit_band = pipeline.config().fit_band_hz;
    let features: Vec<SlopeFeature> = with_threads(args.threads, || {
        epochs
            .par_iter()
            .map(|epoch| {
                let psd = multitaper_psd(epoch, pipeline.tapers())?;
                spectral_slope(&psd, fit_band)
            })
            .collect::<Result<_>>()
    })??;

    let mut out = String::from("epoch,start_s,slope,intercept,residual_rms,n_bins\n");
    for (index, (epoch, feature)) in epochs.iter().zip(&features).enumerate() {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            index,
            epoch.start_time_s,
            feature.slope,
            feature.intercept,
            feature.residual_rms,
            feature.n_bins
        ));
    }
    emit(&args.output, &out)
}

pub fn classify(args: ClassifyArgs) -> Result<()> {
    let config = args.config.resolve()?;
    let pipeline = Pipeline::new(config)?;
    let recording = load_recording(&args.input)?;
    let epochs = prepared_epochs(&pipeline, &recording)?;
    let records = staged_records(&pipeline, &epochs, args.threads)?;

    let mut out = String::from(if args.binary {
        "epoch,start_s,slope,state\n"
    } else {
        "epoch,start_s,slope,stage\n"
    });
    for record in &records {
        let label = if args.binary {
            record.state.name()
        } else {
            record.stage.name()
        };
        out.push_str(&format!(
            "{},{},{},{label}\n",
            record.epoch_index, record.start_time_s, record.slope
        ));
    }
    emit(&args.output, &out)
}

#[derive(Serialize)]
struct StagingReport {
    task: &'static str,
    /// Row/column order of the matrices below.
    stages: [&'static str; 3],
    n_epochs: usize,
    n_scored: u64,
    excluded: ExclusionTally,
    /// `counts[annotated][predicted]`.
    counts: [[u64; 3]; 3],
    /// Rows scaled to sum to one; all-zero rows had no epochs.
    row_normalized: [[f64; 3]; 3],
    accuracy: f64,
}

#[derive(Serialize)]
struct BinaryReport {
    task: &'static str,
    /// Row/column order of `counts`.
    states: [&'static str; 2],
    n_epochs: usize,
    n_scored: u64,
    /// Epochs without a covering annotation.
    excluded_unknown: u64,
    /// `counts[annotated][predicted]`.
    counts: [[u64; 2]; 2],
    accuracy: f64,
}

pub fn evaluate(args: EvaluateArgs) -> Result<()> {
    let config = args.config.resolve()?;
    let pipeline = Pipeline::new(config)?;
    let recording = load_recording(&args.input)?;
    let epochs = prepared_epochs(&pipeline, &recording)?;
    let records = staged_records(&pipeline, &epochs, args.threads)?;
    let hypnogram = parse_hypnogram_csv(
        &fs::read_to_string(&args.hypnogram).map_err(|e| io_at(&args.hypnogram, e))?,
    )?;
    let annotations = align_labels(&hypnogram, &epochs);

    let text = if args.binary {
        to_json(&binary_report(&records, &annotations)?)?
    } else {
        let predictions: Vec<Stage> = records.iter().map(|r| r.stage).collect();
        let evaluation = score_stages(&predictions, &annotations)?;
        let (row_normalized, _) = evaluation.matrix.normalized();
        to_json(&StagingReport {
            task: "three_way_staging",
            stages: [Stage::Wake.name(), Stage::Nrem3.name(), Stage::Rem.name()],
            n_epochs: epochs.len(),
            n_scored: evaluation.n_scored,
            excluded: evaluation.excluded,
            counts: evaluation.matrix.counts,
            row_normalized,
            accuracy: evaluation.accuracy,
        })?
    };
    emit(&args.output, &text)
}

/// Scores the two-state task: wake against everything else. Light sleep
/// counts as reduced arousal here rather than being excluded, so only
/// unannotated epochs drop out.
fn binary_report(records: &[EpochRecord], annotations: &[RawStage]) -> Result<BinaryReport> {
    let mut counts = [[0u64; 2]; 2];
    let mut excluded_unknown = 0u64;
    for (record, annotation) in records.iter().zip(annotations) {
        let truth = match annotation {
            RawStage::Unknown => {
                excluded_unknown += 1;
                continue;
            }
            RawStage::Wake => 0,
            _ => 1,
        };
        let predicted = match record.state {
            ArousalState::Wake => 0,
            ArousalState::ReducedArousal => 1,
        };
        counts[truth][predicted] += 1;
    }
    let n_scored: u64 = counts.iter().flatten().sum();
    if n_scored == 0 {
        return Err(Error::NoData(
            "no epoch had a covering annotation to score against".into(),
        ));
    }
    let hits = counts[0][0] + counts[1][1];
    Ok(BinaryReport {
        task: "binary_arousal",
        states: [
            ArousalState::Wake.name(),
            ArousalState::ReducedArousal.name(),
        ],
        n_epochs: records.len(),
        n_scored,
        excluded_unknown,
        counts,
        accuracy: hits as f64 / n_scored as f64,
    })
}

pub fn synth(args: SynthArgs) -> Result<()> {
    let samples = synthesize_signal(&SynthSpec {
        beta: args.beta,
        duration_s: args.duration_s,
        sample_rate_hz: args.rate,
        seed: args.seed,
        variance: args.variance,
    })?;
    let recording = Recording {
        channels: vec![Channel {
            label: args.channel.clone(),
            sample_rate_hz: args.rate,
            samples,
        }],
        // Fixed header stamps keep identical flags producing identical bytes.
        start_date: "01.01.00".to_string(),
        start_time: "00.00.00".to_string(),
        metadata: [(
            "recording".to_string(),
            format!("synthetic power-law beta {} seed {}", args.beta, args.seed),
        )]
        .into(),
    };
    store_recording(&args.output, &recording)?;
    log::info!(
        "wrote {} s of beta {} signal to {}",
        args.duration_s,
        args.beta,
        args.output.display()
    );
    Ok(())
}

#[derive(Serialize)]
struct StageTiming {
    stage: &'static str,
    median_ms: f64,
    p95_ms: f64,
    /// Rough live working-set estimate while the stage runs.
    live_buffer_bytes: usize,
}

#[derive(Serialize)]
struct TaperStorage {
    dense_bytes: usize,
    sparse_bytes: usize,
    sparse_epsilon: f64,
    dense_entries: usize,
    sparse_entries: usize,
    /// Retained fraction across the whole family.
    density: f64,
}

#[derive(Serialize)]
struct BenchReport {
    n_epochs: usize,
    epoch_s: f64,
    sample_rate_hz: f64,
    n_tapers: usize,
    stages: Vec<StageTiming>,
    taper_storage: TaperStorage,
}

fn percentile(sorted_ms: &[f64], fraction: f64) -> f64 {
    let index = ((sorted_ms.len() as f64 * fraction).ceil() as usize).clamp(1, sorted_ms.len());
    sorted_ms[index - 1]
}

fn timing(stage: &'static str, mut samples_ms: Vec<f64>, live_buffer_bytes: usize) -> StageTiming {
    samples_ms.sort_by(f64::total_cmp);
    StageTiming {
        stage,
        median_ms: percentile(&samples_ms, 0.5),
        p95_ms: percentile(&samples_ms, 0.95),
        live_buffer_bytes,
    }
}

pub fn bench(args: BenchArgs) -> Result<()> {
    if args.epochs < 100 {
        return Err(Error::Config(format!(
            "timing needs at least 100 epochs for stable percentiles, got {}",
            args.epochs
        )));
    }
    let config = args.config.resolve()?;
    let pipeline = Pipeline::new(config)?;
    let config = pipeline.config();
    let thresholds = config.thresholds;
    let fit_band = config.fit_band_hz;

    // One continuous corpus cut into single-epoch channels, so the timed
    // filtering stage sees exactly one epoch of work per call.
    let signal = synthesize_signal(&SynthSpec {
        beta: 2.0,
        duration_s: args.epochs as f64 * config.epoch_s,
        sample_rate_hz: config.target_rate_hz,
        seed: 1212,
        variance: 1.0,
    })?;
    let samples_per_epoch = (config.epoch_s * config.target_rate_hz) as usize;

    let mut filter_ms = Vec::with_capacity(args.epochs);
    let mut psd_ms = Vec::with_capacity(args.epochs);
    let mut slope_ms = Vec::with_capacity(args.epochs);
    let mut classify_ms = Vec::with_capacity(args.epochs);
    let mut psd_grid_len = 0;
    let mut fit_bins = 0;

    for chunk in signal.chunks_exact(samples_per_epoch) {
        let channel = Channel {
            label: config.channel_label.clone(),
            sample_rate_hz: config.target_rate_hz,
            samples: chunk.to_vec(),
        };

        let start = Instant::now();
        let epochs = pipeline.prepare_channel(&channel)?;
        filter_ms.push(start.elapsed().as_secs_f64() * 1e3);
        let epoch = &epochs[0];

        let start = Instant::now();
        let psd = multitaper_psd(epoch, pipeline.tapers())?;
        psd_ms.push(start.elapsed().as_secs_f64() * 1e3);
        psd_grid_len = psd.freqs_hz.len();

        let start = Instant::now();
        let feature = spectral_slope(&psd, fit_band)?;
        slope_ms.push(start.elapsed().as_secs_f64() * 1e3);
        fit_bins = feature.n_bins;

        let start = Instant::now();
        let stage = arousal_core::classifier::classify_slope(feature.slope, &thresholds)?;
        let state = arousal_core::classifier::classify_binary_arousal(feature.slope, &thresholds)?;
        classify_ms.push(start.elapsed().as_secs_f64() * 1e3);
        std::hint::black_box((stage, state));
    }

    let taper_storage = taper_storage(pipeline.tapers(), config, args.sparse_epsilon)?;
    let n = samples_per_epoch;
    let report = BenchReport {
        n_epochs: args.epochs,
        epoch_s: config.epoch_s,
        sample_rate_hz: config.target_rate_hz,
        n_tapers: pipeline.tapers().params.n_tapers,
        stages: vec![
            // Input and output sample buffers.
            timing("filtering", filter_ms, 2 * 8 * n),
            // Taper family, tapered copy, half spectrum, returned grid.
            timing(
                "psd",
                psd_ms,
                pipeline.tapers().storage_bytes() + 8 * n + 16 * (n / 2 + 1) + 16 * psd_grid_len,
            ),
            // Log-log coordinates of the fitted band.
            timing("slope", slope_ms, 16 * fit_bins),
            // Pure arithmetic on one scalar.
            timing("classify", classify_ms, 0),
        ],
        taper_storage,
    };
    emit(&args.output, &to_json(&report)?)
}

/// Byte footprint of the dense family next to its truncated form at
/// `epsilon`. Values are reported as measured; truncation trades recall
/// of tiny entries for index overhead, so sparse is not always smaller.
fn taper_storage(active: &TaperSet, config: &PipelineConfig, epsilon: f64) -> Result<TaperStorage> {
    let params = config.taper_params();
    let dense = if config.sparsify_epsilon > 0.0 {
        compute_tapers(&params)?
    } else {
        active.clone()
    };
    let (sparse, report) = sparsify_tapers(&dense, epsilon)?;
    let dense_entries = params.n_samples * params.n_tapers;
    let sparse_entries: usize = report.nnz.iter().sum();
    Ok(TaperStorage {
        dense_bytes: dense.storage_bytes(),
        sparse_bytes: sparse.storage_bytes(),
        sparse_epsilon: epsilon,
        dense_entries,
        sparse_entries,
        density: sparse_entries as f64 / dense_entries as f64,
    })
}
