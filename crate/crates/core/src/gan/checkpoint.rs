//! Full training checkpoints.
//!
//! The file starts with the latent checkpoint (magic `NTCK`, version, embedding
//! table, mapping network) followed by a `u32` count of tagged sections, each a
//! 4-byte tag, a `u64` payload length, and the payload. Readers skip tags they
//! do not know.

use std::path::Path;

use crate::binio::{read_file, write_file, Reader, Writer};
use crate::error::Result;
use crate::latent::{decode_latent, encode_latent, EmbeddingTable};
use crate::numcore::{AdamHyper, AdamState};

use super::config::TrainConfig;
use super::model::{Discriminator, Generator};
use super::train::{RunLog, TrainState};

const SYNTHESIS: &[u8; 4] = b"SYNT";
const DISCRIMINATOR: &[u8; 4] = b"DISC";
const ADAM_G: &[u8; 4] = b"ADMG";
const ADAM_D: &[u8; 4] = b"ADMD";
const STATUS: &[u8; 4] = b"STAT";
const CONFIG: &[u8; 4] = b"CONF";

/// Model and optimizer state restored from a checkpoint.
#[derive(Clone, Debug)]
pub struct Checkpoint {
    pub generator: Generator,
    pub discriminator: Discriminator,
    pub table: EmbeddingTable,
    pub adam_g: AdamState,
    pub adam_d: AdamState,
    pub iteration: u64,
    pub config: TrainConfig,
}

impl Checkpoint {
    /// A training state positioned after this checkpoint's iteration, with a
    /// fresh random stream and empty log.
    pub fn into_state(self) -> TrainState {
        TrainState {
            rng: crate::numcore::Rng::new(self.config.seed ^ self.iteration.rotate_left(32)),
            generator: self.generator,
            discriminator: self.discriminator,
            table: self.table,
            adam_g: self.adam_g,
            adam_d: self.adam_d,
            iteration: self.iteration,
            config: self.config,
            log: RunLog::default(),
        }
    }
}

fn encode_adam(w: &mut Writer, s: &AdamState) {
    w.f64s(&[s.hyper.lr, s.hyper.beta1, s.hyper.beta2, s.hyper.eps]);
    w.u64(s.step_count());
    w.len_u32(s.first_moments().len());
    for (m, v) in s.first_moments().iter().zip(s.second_moments()) {
        w.matrix(m);
        w.matrix(v);
    }
}

fn decode_adam(r: &mut Reader<'_>) -> Result<AdamState> {
    let at = r.offset();
    let h = r.f64s(4)?;
    let hyper = AdamHyper { lr: h[0], beta1: h[1], beta2: h[2], eps: h[3] };
    let step = r.u64()?;
    let n = r.len()?;
    let mut first = Vec::with_capacity(n);
    let mut second = Vec::with_capacity(n);
    for _ in 0..n {
        first.push(r.matrix()?);
        second.push(r.matrix()?);
    }
    AdamState::from_parts(hyper, step, first, second).map_err(|e| r.error_at(at, e.to_string()))
}

fn section(w: &mut Writer, tag: &[u8; 4], body: impl FnOnce(&mut Writer)) {
    let mut inner = Writer::default();
    body(&mut inner);
    w.bytes(tag);
    w.u64(inner.buf.len() as u64);
    w.bytes(&inner.buf);
}

pub fn encode_checkpoint(state: &TrainState) -> Result<Vec<u8>> {
    let config = state.config.to_toml_string()?;
    let mut w = Writer::default();
    encode_latent(&mut w, &state.table, &state.generator.mapping);
    w.u32(6);
    section(&mut w, SYNTHESIS, |w| w.mlp(&state.generator.synthesis));
    section(&mut w, DISCRIMINATOR, |w| w.mlp(&state.discriminator.mlp));
    section(&mut w, ADAM_G, |w| encode_adam(w, &state.adam_g));
    section(&mut w, ADAM_D, |w| encode_adam(w, &state.adam_d));
    section(&mut w, STATUS, |w| w.u64(state.iteration));
    section(&mut w, CONFIG, |w| w.string(&config));
    Ok(w.buf)
}

pub fn save_checkpoint(path: &Path, state: &TrainState) -> Result<()> {
    write_file(path, &encode_checkpoint(state)?)
}

pub fn decode_checkpoint(bytes: &[u8], path: &Path) -> Result<Checkpoint> {
    let mut r = Reader::new(bytes, path);
    let (table, mapping) = decode_latent(&mut r)?;
    let count = r.u32()?;
    let (mut synthesis, mut disc, mut adam_g, mut adam_d, mut iteration, mut config) =
        (None, None, None, None, None, None);
    for _ in 0..count {
        let tag_at = r.offset();
        let tag: [u8; 4] = r.take(4)?.try_into().expect("four bytes");
        let len = r.u64()?;
        let len = usize::try_from(len).map_err(|_| r.error("section length overflow"))?;
        let start = r.offset();
        let body = r.take(len)?;
        let mut s = Reader::new(body, path);
        let rebase = |e: crate::error::Error| match e {
            crate::error::Error::Format { path, offset, detail } => {
                crate::error::Error::Format { path, offset: offset + start, detail }
            }
            other => other,
        };
        match &tag {
            SYNTHESIS => synthesis = Some(s.mlp().map_err(rebase)?),
            DISCRIMINATOR => {
                let mlp = s.mlp().map_err(rebase)?;
                disc = Some(Discriminator::from_mlp(mlp).map_err(|e| r.error_at(start, e.to_string()))?);
            }
            ADAM_G => adam_g = Some(decode_adam(&mut s).map_err(rebase)?),
            ADAM_D => adam_d = Some(decode_adam(&mut s).map_err(rebase)?),
            STATUS => iteration = Some(s.u64().map_err(rebase)?),
            CONFIG => {
                let text = s.string().map_err(rebase)?;
                config = Some(TrainConfig::from_toml_str(&text).map_err(|e| r.error_at(start, e.to_string()))?);
            }
            _ => {}
        }
        if s.remaining() != 0 && [SYNTHESIS, DISCRIMINATOR, ADAM_G, ADAM_D, STATUS, CONFIG].contains(&&tag) {
            return Err(r.error_at(tag_at, format!("section {} has trailing bytes", String::from_utf8_lossy(&tag))));
        }
    }
    let missing = |what: &str| r.error(format!("missing {what} section"));
    let synthesis = synthesis.ok_or_else(|| missing("SYNT"))?;
    let generator = Generator::from_parts(mapping, synthesis).map_err(|e| r.error(e.to_string()))?;
    let discriminator = disc.ok_or_else(|| missing("DISC"))?;
    if discriminator.dim() != table.dim() {
        return Err(r.error("discriminator conditioning width differs from the embedding dim"));
    }
    Ok(Checkpoint {
        generator,
        discriminator,
        table,
        adam_g: adam_g.ok_or_else(|| missing("ADMG"))?,
        adam_d: adam_d.ok_or_else(|| missing("ADMD"))?,
        iteration: iteration.ok_or_else(|| missing("STAT"))?,
        config: config.ok_or_else(|| missing("CONF"))?,
    })
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    decode_checkpoint(&read_file(path)?, path)
}
