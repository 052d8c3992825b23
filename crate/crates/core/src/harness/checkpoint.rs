//! Digest-protected binary checkpoints.
//!
//! Layout: magic `ESGDCKPT`, `u32` format version, `u64` payload length,
//! payload, SHA-256 of the payload. Every random stream is derived from the
//! master seed, the anchoring round and the generation index, so those three
//! values fully determine where each stream resumes.

use std::path::Path;

use sha2::{Digest, Sha256};

use super::codec::{DecodeResult, Reader, Writer};
use crate::driver::{EsgdConfig, EsgdRun};
use crate::error::{Error, Result};
use crate::history::{FineTuneRecord, GenerationRecord, RoundRecord, RunHistory, SwitchEvent};
use crate::optimizer::{Family, OptimizerConfig, OptimizerState};
use crate::params::ParamVector;
use crate::population::{Individual, Population};

const MAGIC: &[u8; 8] = b"ESGDCKPT";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config: EsgdConfig,
    /// Anchoring rounds requested for the whole run.
    pub rounds_total: usize,
    pub round: usize,
    pub round_initial_anchor: f64,
    pub population: Population<f64>,
    pub history: RunHistory,
}

impl Checkpoint {
    pub fn from_run(run: &EsgdRun<f64>, rounds_total: usize) -> Self {
        Self {
            config: run.config().clone(),
            rounds_total,
            round: run.round(),
            round_initial_anchor: run.round_initial_anchor(),
            population: run.population.clone(),
            history: run.history.clone(),
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let payload = self.payload();
        let mut out = Vec::with_capacity(payload.len() + 52);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(payload.len() as u64).to_le_bytes());
        out.extend_from_slice(&payload);
        out.extend_from_slice(&Sha256::digest(&payload));
        out
    }

    pub fn from_bytes(bytes: &[u8], path: &Path) -> Result<Self> {
        if bytes.len() < 20 + 32 || &bytes[..8] != MAGIC {
            return Err(Error::format(path, "not an esgd checkpoint"));
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
        if version != VERSION {
            return Err(Error::format(
                path,
                format!("unsupported checkpoint version {version}"),
            ));
        }
        let len = u64::from_le_bytes(bytes[12..20].try_into().expect("8 bytes")) as usize;
        if bytes.len() != 20 + len + 32 {
            return Err(Error::format(
                path,
                format!(
                    "length field says {len} payload bytes but file has {}",
                    bytes.len().saturating_sub(52)
                ),
            ));
        }
        let payload = &bytes[20..20 + len];
        let stored = &bytes[20 + len..];
        let computed = Sha256::digest(payload);
        if stored != computed.as_slice() {
            return Err(Error::DigestMismatch {
                path: path.to_path_buf(),
                stored: hex(stored),
                computed: hex(&computed),
            });
        }
        Self::parse(payload).map_err(|m| Error::format(path, m))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let tmp = path.with_extension("ckpt.tmp");
        std::fs::write(&tmp, self.to_bytes()).map_err(|e| Error::io(&tmp, e))?;
        std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes, path)
    }

    fn payload(&self) -> Vec<u8> {
        let mut w = Writer::default();
        w.str(&serde_json::to_string(&self.config).expect("config serializes"));
        w.usize(self.rounds_total);
        w.usize(self.round);
        w.f64(self.round_initial_anchor);
        write_population(&mut w, &self.population);
        write_history(&mut w, &self.history);
        w.buf
    }

    fn parse(payload: &[u8]) -> DecodeResult<Self> {
        let mut r = Reader::new(payload);
        let config = serde_json::from_str(&r.str()?).map_err(|e| format!("config: {e}"))?;
        let rounds_total = r.usize()?;
        let round = r.usize()?;
        let round_initial_anchor = r.f64()?;
        let population = read_population(&mut r)?;
        let history = read_history(&mut r)?;
        if !r.is_exhausted() {
            return Err("trailing bytes after payload".into());
        }
        Ok(Self {
            config,
            rounds_total,
            round,
            round_initial_anchor,
            population,
            history,
        })
    }
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn write_population(w: &mut Writer, pop: &Population<f64>) {
    w.usize(pop.generation);
    w.u64(pop.next_id);
    w.usize(pop.members.len());
    for m in &pop.members {
        w.u64(m.id);
        w.bool(m.is_anchor);
        w.bool(m.anchor_descended);
        w.opt_f64(m.fitness);
        w.bool(m.config.is_some());
        if let Some(c) = &m.config {
            w.u8(c.family.code());
            w.f64(c.learning_rate);
            w.opt_f64(c.momentum);
            w.bool(c.nesterov);
            w.usize(c.batch_size);
            w.f64(c.beta1);
            w.f64(c.beta2);
            w.f64(c.epsilon);
        }
        w.f64s(&m.params);
        w.u64(m.opt_state.step_count);
        w.f64s(&m.opt_state.velocity);
        w.f64s(&m.opt_state.m1);
        w.f64s(&m.opt_state.m2);
    }
}

fn read_population(r: &mut Reader) -> DecodeResult<Population<f64>> {
    let generation = r.usize()?;
    let next_id = r.u64()?;
    let n = r.len(1)?;
    let mut members = Vec::with_capacity(n);
    for _ in 0..n {
        let id = r.u64()?;
        let is_anchor = r.bool()?;
        let anchor_descended = r.bool()?;
        let fitness = r.opt_f64()?;
        let config = if r.bool()? {
            let code = r.u8()?;
            Some(OptimizerConfig {
                family: Family::from_code(code)
                    .ok_or(format!("unknown optimizer family {code}"))?,
                learning_rate: r.f64()?,
                momentum: r.opt_f64()?,
                nesterov: r.bool()?,
                batch_size: r.usize()?,
                beta1: r.f64()?,
                beta2: r.f64()?,
                epsilon: r.f64()?,
            })
        } else {
            None
        };
        let params = ParamVector::new(r.f64s()?);
        let opt_state = OptimizerState {
            step_count: r.u64()?,
            velocity: r.f64s()?,
            m1: r.f64s()?,
            m2: r.f64s()?,
        };
        members.push(Individual {
            id,
            params,
            config,
            opt_state,
            fitness,
            is_anchor,
            anchor_descended,
        });
    }
    Ok(Population {
        members,
        generation,
        next_id,
    })
}

fn write_history(w: &mut Writer, h: &RunHistory) {
    w.f64(h.initial_anchor);
    w.usize(h.generations.len());
    for g in &h.generations {
        w.usize(g.round);
        w.usize(g.generation);
        w.f64(g.best);
        w.f64(g.median);
        w.f64(g.anchor);
        w.bool(g.switched);
        w.f64(g.lr_low);
        w.f64(g.lr_high);
        w.f64s(&g.anchor_after_step);
        w.usize(g.switches.len());
        for s in &g.switches {
            w.usize(s.generation);
            w.usize(s.evolution_step);
            w.f64(s.old_fitness);
            w.f64(s.new_fitness);
            w.u64(s.new_anchor_id);
        }
        w.usize(g.non_finite);
    }
    w.usize(h.fine_tune.len());
    for f in &h.fine_tune {
        w.usize(f.round);
        w.usize(f.epoch);
        w.f64(f.best);
        w.f64(f.anchor);
        w.usize(f.backoffs);
    }
    w.usize(h.rounds.len());
    for r in &h.rounds {
        w.usize(r.round);
        w.f64(r.initial_anchor);
        w.f64(r.final_best);
    }
}

fn read_history(r: &mut Reader) -> DecodeResult<RunHistory> {
    let initial_anchor = r.f64()?;
    let n = r.len(8)?;
    let mut generations = Vec::with_capacity(n);
    for _ in 0..n {
        let round = r.usize()?;
        let generation = r.usize()?;
        let best = r.f64()?;
        let median = r.f64()?;
        let anchor = r.f64()?;
        let switched = r.bool()?;
        let lr_low = r.f64()?;
        let lr_high = r.f64()?;
        let anchor_after_step = r.f64s()?;
        let ns = r.len(8)?;
        let switches = (0..ns)
            .map(|_| {
                Ok(SwitchEvent {
                    generation: r.usize()?,
                    evolution_step: r.usize()?,
                    old_fitness: r.f64()?,
                    new_fitness: r.f64()?,
                    new_anchor_id: r.u64()?,
                })
            })
            .collect::<DecodeResult<_>>()?;
        let non_finite = r.usize()?;
        generations.push(GenerationRecord {
            round,
            generation,
            best,
            median,
            anchor,
            switched,
            lr_low,
            lr_high,
            anchor_after_step,
            switches,
            non_finite,
        });
    }
    let n = r.len(8)?;
    let fine_tune = (0..n)
        .map(|_| {
            Ok(FineTuneRecord {
                round: r.usize()?,
                epoch: r.usize()?,
                best: r.f64()?,
                anchor: r.f64()?,
                backoffs: r.usize()?,
            })
        })
        .collect::<DecodeResult<_>>()?;
    let n = r.len(8)?;
    let rounds = (0..n)
        .map(|_| {
            Ok(RoundRecord {
                round: r.usize()?,
                initial_anchor: r.f64()?,
                final_best: r.f64()?,
            })
        })
        .collect::<DecodeResult<_>>()?;
    Ok(RunHistory {
        initial_anchor,
        generations,
        fine_tune,
        rounds,
    })
}
