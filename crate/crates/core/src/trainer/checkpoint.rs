//! Trainer checkpoints as named records in a [`Container`].

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;
use std::time::Instant;

use super::metrics::{LossAccumulator, MetricsRecord};
use super::{LandmarkState, Streams, TrainConfig, Trainer};
use crate::agents::ActorCritic;
use crate::error::{check_dim, Error, Result};
use crate::nn::codec::{Container, Decoder, Encoder};
use crate::planner::ShiftTracker;
use crate::rng::{Rng, RngState};

/// Version of the record layout inside the container.
pub const CHECKPOINT_VERSION: u32 = 1;

fn put_rng(e: &mut Encoder, rng: &Rng) {
    let s = RngState::capture(rng);
    e.bytes(&s.seed);
    e.u64(s.stream);
    e.u128(s.word_pos);
}

fn get_rng(d: &mut Decoder) -> Result<Rng> {
    let mut seed = [0u8; 32];
    seed.copy_from_slice(d.take(32)?);
    Ok(RngState { seed, stream: d.u64()?, word_pos: d.u128()? }.restore())
}

fn manifest(t: &Trainer) -> String {
    let state_dim = t.spec.state_dim();
    [
        format!("format_version={CHECKPOINT_VERSION}"),
        format!("state_dim={state_dim}"),
        format!("goal_dim={}", t.goal_dim()),
        format!("action_dim={}", t.low.action_dim()),
        format!("step={}", t.step),
        format!("episode={}", t.episode),
        format!("landmarks={}", t.landmarks.is_some()),
        format!("low_buffer_len={}", t.low_buffer.len()),
        format!("high_buffer_len={}", t.high_buffer.len()),
    ]
    .join("\n")
}

/// Parses the manifest record into key/value pairs.
pub fn read_manifest(c: &Container) -> Result<Vec<(String, String)>> {
    let text = c.decode_with("manifest", |d| d.str())?;
    text.lines()
        .map(|l| {
            l.split_once('=')
                .map(|(k, v)| (k.to_string(), v.to_string()))
                .ok_or_else(|| Error::Format(format!("bad manifest line '{l}'")))
        })
        .collect()
}

pub(super) fn encode(t: &Trainer) -> Container {
    let mut c = Container::new();
    c.push_with("manifest", |e| e.str(&manifest(t)));
    c.push_with("config", |e| e.str(&t.config.to_text()));
    c.push_with("high", |e| e.put(&t.high));
    c.push_with("low", |e| e.put(&t.low));
    c.push_with("low_buffer", |e| e.put(&t.low_buffer));
    c.push_with("high_buffer", |e| e.put(&t.high_buffer));
    if let Some(lm) = &t.landmarks {
        c.push_with("landmarks", |e| {
            e.put(&lm.rnd);
            e.put(&lm.queue);
            e.put(&lm.matrix);
            e.put(&lm.net);
            e.bool(lm.net_trained);
            e.usize(lm.pending.len());
            for traj in &lm.pending {
                e.usize(traj.len());
                for g in traj {
                    e.f64s(g);
                }
            }
            e.f64(lm.shift.sum);
            e.u64(lm.shift.count);
        });
    }
    c.push_with("progress", |e| {
        e.u64(t.step);
        e.u64(t.episode);
        e.u64(t.evals);
        e.put(&t.losses);
        e.usize(t.last_counts.0);
        e.usize(t.last_counts.1);
        e.f64(t.elapsed_before + t.started.elapsed().as_secs_f64());
        for rng in t.rngs.all() {
            put_rng(e, rng);
        }
        e.usize(t.metrics.len());
        for m in &t.metrics {
            e.put(m);
        }
    });
    c
}

fn check_net(expected: &ActorCritic, loaded: &ActorCritic) -> Result<()> {
    check_dim(expected.obs_dim(), loaded.obs_dim())?;
    check_dim(expected.action_dim(), loaded.action_dim())
}

pub(super) fn decode(c: &Container) -> Result<Trainer<'static>> {
    let manifest = read_manifest(c)?;
    let version = manifest
        .iter()
        .find(|(k, _)| k == "format_version")
        .and_then(|(_, v)| v.parse::<u32>().ok())
        .ok_or_else(|| Error::Format("manifest lacks format_version".into()))?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::Format(format!("unsupported checkpoint version {version}")));
    }
    let config = TrainConfig::parse(&c.decode_with("config", |d| d.str())?)?;
    let mut t = Trainer::new(config)?;

    let high: ActorCritic = c.decode_with("high", |d| d.get())?;
    let low: ActorCritic = c.decode_with("low", |d| d.get())?;
    check_net(&t.high, &high)?;
    check_net(&t.low, &low)?;
    t.high = high;
    t.low = low;
    t.low_buffer = c.decode_with("low_buffer", |d| d.get())?;
    t.high_buffer = c.decode_with("high_buffer", |d| d.get())?;
    let state_dim = t.spec.state_dim();
    if let Some(tr) = t.low_buffer.iter_chronological().next() {
        check_dim(state_dim, tr.state.dim())?;
    }
    if let Some(tr) = t.high_buffer.iter_chronological().next() {
        check_dim(state_dim, tr.state.len())?;
    }

    match (t.landmarks.as_mut(), c.get("landmarks").is_ok()) {
        (Some(lm), true) => {
            let loaded = c.decode_with("landmarks", |d| {
                let rnd = d.get()?;
                let queue = d.get()?;
                let matrix = d.get()?;
                let net = d.get()?;
                let net_trained = d.bool()?;
                let n = d.usize()?;
                let mut pending = Vec::with_capacity(n.min(4096));
                for _ in 0..n {
                    let len = d.usize()?;
                    let mut traj = Vec::with_capacity(len.min(1 << 16));
                    for _ in 0..len {
                        traj.push(d.f64s()?);
                    }
                    pending.push(traj);
                }
                let shift = ShiftTracker { sum: d.f64()?, count: d.u64()? };
                Ok(LandmarkState { rnd, queue, matrix, net, net_trained, pending, shift })
            })?;
            check_dim(lm.rnd.input_dim(), loaded.rnd.input_dim())?;
            check_dim(lm.net.goal_dim(), loaded.net.goal_dim())?;
            *lm = loaded;
        }
        (None, false) => {}
        _ => return Err(Error::Format("landmark record does not match the bypass setting".into())),
    }

    c.decode_with("progress", |d| {
        t.step = d.u64()?;
        t.episode = d.u64()?;
        t.evals = d.u64()?;
        t.losses = d.get::<LossAccumulator>()?;
        t.last_counts = (d.usize()?, d.usize()?);
        t.elapsed_before = d.f64()?;
        for rng in t.rngs.all_mut() {
            *rng = get_rng(d)?;
        }
        let n = d.usize()?;
        t.metrics = (0..n).map(|_| d.get::<MetricsRecord>()).collect::<Result<_>>()?;
        Ok(())
    })?;
    t.started = Instant::now();
    Ok(t)
}

pub fn save_checkpoint(trainer: &Trainer, path: impl AsRef<Path>) -> Result<()> {
    let f = File::create(path)?;
    trainer.to_container().write_to(BufWriter::new(f))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Trainer<'static>> {
    let c = Container::read_from(BufReader::new(File::open(path)?))?;
    decode(&c)
}

impl Streams {
    #[cfg(test)]
    pub(crate) fn states(&self) -> Vec<RngState> {
        self.all().iter().map(|r| RngState::capture(r)).collect()
    }
}
