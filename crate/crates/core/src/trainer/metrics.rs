//! Evaluation records and their CSV rendering.

use std::io::Write;

use crate::error::Result;
use crate::nn::codec::{Codec, Decoder, Encoder};

pub const CSV_HEADER: &str = "step,episode,eval_success_rate,mean_episode_return,high_critic_loss,\
low_critic_loss,high_actor_loss,low_actor_loss,landmark_loss,rnd_loss,queue_size,coverage_landmarks,\
novelty_landmarks";

/// One evaluation. Loss columns are means over the updates since the
/// previous record (NaN when there were none). Wall-clock time is kept out
/// of the CSV so that metrics files are reproducible byte for byte.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRecord {
    pub step: u64,
    pub episode: u64,
    pub eval_success_rate: f64,
    pub mean_episode_return: f64,
    pub high_critic_loss: f64,
    pub low_critic_loss: f64,
    pub high_actor_loss: f64,
    pub low_actor_loss: f64,
    pub landmark_loss: f64,
    pub rnd_loss: f64,
    pub queue_size: usize,
    pub coverage_landmarks: usize,
    pub novelty_landmarks: usize,
    pub wall_seconds: f64,
}

/// `%g`-style rendering with six significant digits.
pub fn format_sig6(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return "0".into();
    }
    let sci = format!("{x:.5e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-4..6).contains(&exp) {
        let decimals = (5 - exp) as usize;
        trim_zeros(format!("{x:.decimals$}"))
    } else {
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{}e{sign}{:02}", trim_zeros(mantissa.to_string()), exp.abs())
    }
}

fn trim_zeros(s: String) -> String {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}

impl MetricsRecord {
    pub fn csv_row(&self) -> String {
        [
            self.step.to_string(),
            self.episode.to_string(),
            format_sig6(self.eval_success_rate),
            format_sig6(self.mean_episode_return),
            format_sig6(self.high_critic_loss),
            format_sig6(self.low_critic_loss),
            format_sig6(self.high_actor_loss),
            format_sig6(self.low_actor_loss),
            format_sig6(self.landmark_loss),
            format_sig6(self.rnd_loss),
            self.queue_size.to_string(),
            self.coverage_landmarks.to_string(),
            self.novelty_landmarks.to_string(),
        ]
        .join(",")
    }
}

pub fn write_csv<W: Write>(records: &[MetricsRecord], mut w: W) -> Result<()> {
    writeln!(w, "{CSV_HEADER}")?;
    for r in records {
        writeln!(w, "{}", r.csv_row())?;
    }
    Ok(())
}

pub fn to_csv(records: &[MetricsRecord]) -> String {
    let mut out = Vec::new();
    write_csv(records, &mut out).expect("writing to memory");
    String::from_utf8(out).expect("ascii")
}

/// `step,wall_seconds` sidecar.
pub fn timing_csv(records: &[MetricsRecord]) -> String {
    let mut s = String::from("step,wall_seconds\n");
    for r in records {
        s.push_str(&format!("{},{}\n", r.step, format_sig6(r.wall_seconds)));
    }
    s
}

/// Running mean of one loss series.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Mean {
    pub sum: f64,
    pub count: u64,
}

impl Mean {
    pub fn add(&mut self, x: f64) {
        self.sum += x;
        self.count += 1;
    }

    /// Mean so far (NaN if empty), then reset.
    pub fn take(&mut self) -> f64 {
        let m = if self.count == 0 { f64::NAN } else { self.sum / self.count as f64 };
        *self = Mean::default();
        m
    }
}

/// Loss accumulators between evaluations.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LossAccumulator {
    pub high_critic: Mean,
    pub low_critic: Mean,
    pub high_actor: Mean,
    pub low_actor: Mean,
    pub landmark: Mean,
    pub rnd: Mean,
}

impl LossAccumulator {
    fn all_mut(&mut self) -> [&mut Mean; 6] {
        [&mut self.high_critic, &mut self.low_critic, &mut self.high_actor, &mut self.low_actor, &mut self.landmark, &mut self.rnd]
    }
}

impl Codec for LossAccumulator {
    fn encode(&self, e: &mut Encoder) {
        for m in [&self.high_critic, &self.low_critic, &self.high_actor, &self.low_actor, &self.landmark, &self.rnd] {
            e.f64(m.sum);
            e.u64(m.count);
        }
    }

    fn decode(d: &mut Decoder) -> Result<Self> {
        let mut acc = LossAccumulator::default();
        for m in acc.all_mut() {
            m.sum = d.f64()?;
            m.count = d.u64()?;
        }
        Ok(acc)
    }
}

impl Codec for MetricsRecord {
    fn encode(&self, e: &mut Encoder) {
        e.u64(self.step);
        e.u64(self.episode);
        for v in [
            self.eval_success_rate,
            self.mean_episode_return,
            self.high_critic_loss,
            self.low_critic_loss,
            self.high_actor_loss,
            self.low_actor_loss,
            self.landmark_loss,
            self.rnd_loss,
        ] {
            e.f64(v);
        }
        e.usize(self.queue_size);
        e.usize(self.coverage_landmarks);
        e.usize(self.novelty_landmarks);
        e.f64(self.wall_seconds);
    }

    fn decode(d: &mut Decoder) -> Result<Self> {
        Ok(MetricsRecord {
            step: d.u64()?,
            episode: d.u64()?,
            eval_success_rate: d.f64()?,
            mean_episode_return: d.f64()?,
            high_critic_loss: d.f64()?,
            low_critic_loss: d.f64()?,
            high_actor_loss: d.f64()?,
            low_actor_loss: d.f64()?,
            landmark_loss: d.f64()?,
            rnd_loss: d.f64()?,
            queue_size: d.usize()?,
            coverage_landmarks: d.usize()?,
            novelty_landmarks: d.usize()?,
            wall_seconds: d.f64()?,
        })
    }
}
