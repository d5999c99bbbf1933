//! Timing sweeps: full fits over a bandwidth × decimation grid, and the
//! dense E-step at several thread counts.

use std::time::Instant;

use anyhow::Result;
use gmmscape::fit::{e_step, fit_with, kinit_labels, m_step_hard, EmParams, GbmsParams};
use gmmscape::{par, synth, CholeskyCache};
use serde::Serialize;

use crate::config::BenchConfig;
use crate::Frame;

#[derive(Debug, Clone, Serialize)]
pub struct BenchRow {
    pub image_size: String,
    pub bandwidth: f64,
    pub mean_seconds: f64,
    pub std_seconds: f64,
    #[serde(rename = "M")]
    pub components: usize,
}

/// Population mean and standard deviation; one sample has zero spread.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

pub fn sweep(frame: &Frame, cfg: &BenchConfig, em: &EmParams, mut on_row: impl FnMut(&BenchRow)) -> Result<Vec<BenchRow>> {
    cfg.validate()?;
    let mut rows = Vec::new();
    for &factor in &cfg.decimations {
        let cloud = frame.decimated(factor)?.cloud()?;
        let size = format!("{}x{}", frame.width() / factor, frame.height() / factor);
        for bw in cfg.bandwidths() {
            let gbms = GbmsParams::new(bw)?;
            let mut times = Vec::with_capacity(cfg.repetitions);
            let mut m = 0;
            for rep in 0..cfg.repetitions {
                let t = Instant::now();
                let out = fit_with(&cloud, &gbms, em)?;
                times.push(t.elapsed().as_secs_f64());
                m = out.model.len();
                log::debug!("{size} bw {bw:.5} rep {rep}: {:.3}s, M {m}, {} EM iterations", times[rep], out.iterations);
            }
            let (mean, std) = mean_std(&times);
            let row = BenchRow { image_size: size.clone(), bandwidth: bw, mean_seconds: mean, std_seconds: std, components: m };
            on_row(&row);
            rows.push(row);
        }
    }
    Ok(rows)
}

/// Places where a coarser decimation took longer than a finer one at the
/// same bandwidth. Rows must come from [`sweep`] with ascending factors.
pub fn monotonicity_violations(rows: &[BenchRow], decimations: &[usize], bandwidth_count: usize) -> Vec<String> {
    let mut out = Vec::new();
    let mut order: Vec<usize> = (0..decimations.len()).collect();
    order.sort_by_key(|&i| decimations[i]);
    for b in 0..bandwidth_count {
        for w in order.windows(2) {
            let (fine, coarse) = (&rows[w[0] * bandwidth_count + b], &rows[w[1] * bandwidth_count + b]);
            if coarse.mean_seconds > fine.mean_seconds {
                out.push(format!(
                    "bandwidth {:.5}: {} took {:.3}s, more than {} at {:.3}s",
                    fine.bandwidth, coarse.image_size, coarse.mean_seconds, fine.image_size, fine.mean_seconds
                ));
            }
        }
    }
    out
}

#[derive(Debug, Clone, Serialize)]
pub struct EstepRow {
    pub threads: usize,
    pub points: usize,
    pub components: usize,
    pub seconds: f64,
    pub speedup: f64,
}

/// Times the dense E-step on `n` synthetic points and an `m`-component
/// model at each thread count; speedups are relative to the first entry.
pub fn estep_scaling(n: usize, m: usize, thread_counts: &[usize], reps: usize, seed: u64) -> Result<Vec<EstepRow>> {
    let cloud = synth::noisy_planes(n, seed);
    let labels = kinit_labels(cloud.points(), m, seed)?;
    let model = m_step_hard(cloud.points(), &labels, m, 1e-6)?;
    let cache = CholeskyCache::new(&model)?;
    let mut rows: Vec<EstepRow> = Vec::new();
    for &threads in thread_counts {
        let seconds = par::with_threads(threads, || -> Result<f64> {
            // warm-up pass to fault in the responsibility buffers
            e_step(&cloud, &model, &cache)?;
            let mut best = f64::INFINITY;
            for _ in 0..reps.max(1) {
                let t = Instant::now();
                std::hint::black_box(e_step(&cloud, &model, &cache)?);
                best = best.min(t.elapsed().as_secs_f64());
            }
            Ok(best)
        })?;
        let base = rows.first().map_or(seconds, |r| r.seconds);
        rows.push(EstepRow { threads, points: n, components: model.len(), seconds, speedup: base / seconds });
    }
    Ok(rows)
}
