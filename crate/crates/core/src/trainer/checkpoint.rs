//! Binary checkpoints of a training run and loss-history CSV files.

use std::io::Write;
use std::path::Path;

use super::{LossRecord, Model, OptimizerState, TrainConfig, TrainState};
use crate::binio::{Container, Decoder, Encoder, Tag};
use crate::encoder::{EncoderParams, ParamStore};
use crate::error::{GsneError, Result};
use crate::geo_graph::EdgeSetKind;
use crate::objective::Order;
use crate::rng::{RngState, SeededRng};

const MAGIC: &[u8; 8] = b"GSNECKPT";
const VERSION: u32 = 1;

fn tag(order: Order, kind: &[u8; 3]) -> Tag {
    let digit = match order {
        Order::First => b'1',
        Order::Second => b'2',
    };
    [digit, kind[0], kind[1], kind[2]]
}

fn put_params(p: &EncoderParams) -> Encoder {
    let mut e = Encoder::new();
    for s in p.slices() {
        e.f64s(s);
    }
    e
}

fn get_slices(dec: &mut Decoder<'_>, targets: Vec<&mut [f64]>, path: &Path) -> Result<()> {
    for t in targets {
        let v = dec.f64s()?;
        if v.len() != t.len() {
            return Err(GsneError::load(
                path,
                format!("parameter block has {} values, expected {}", v.len(), t.len()),
            ));
        }
        t.copy_from_slice(&v);
    }
    Ok(())
}

pub fn save_checkpoint(state: &TrainState, path: &Path) -> Result<()> {
    let mut c = Container::new(VERSION);
    let mut conf = Encoder::new();
    conf.str(&serde_json::to_string(&state.config)?);
    c.push(*b"CONF", conf);
    let mut it = Encoder::new();
    it.u64(state.iteration);
    c.push(*b"ITER", it);
    let rs = state.rng.state();
    let mut rng = Encoder::new();
    rng.bytes(&rs.seed).u64(rs.stream).u128(rs.word_pos);
    c.push(*b"RNGS", rng);
    for m in &state.models {
        let mut meta = Encoder::new();
        meta.u64(m.params.seed).u32s(&m.params.dims.iter().map(|&d| d as u32).collect::<Vec<_>>());
        c.push(tag(m.order, b"MET"), meta);
        c.push(tag(m.order, b"ATR"), put_params(&m.params.attr));
        if let Some(ctx) = &m.params.ctx {
            c.push(tag(m.order, b"CTX"), put_params(ctx));
        }
        let mut opt = Encoder::new();
        opt.u64(m.opt.step);
        for s in m.opt.m.iter().chain(&m.opt.v) {
            opt.f64s(s);
        }
        c.push(tag(m.order, b"OPT"), opt);
    }
    let mut hist = Encoder::new();
    hist.u64(state.history.len() as u64);
    for r in &state.history {
        hist.u64(r.iteration).u8(r.edge_set.code()).u8(r.order as u8).f64(r.loss);
    }
    c.push(*b"HIST", hist);
    c.write(path, MAGIC)
}

pub fn load_checkpoint(path: &Path) -> Result<TrainState> {
    let c = Container::read(path, MAGIC, VERSION)?;
    let config: TrainConfig = serde_json::from_str(&c.require(*b"CONF")?.str()?)
        .map_err(|e| GsneError::load(path, format!("bad config section: {e}")))?;
    let iteration = c.require(*b"ITER")?.u64()?;
    let mut d = c.require(*b"RNGS")?;
    let seed: [u8; 32] = d
        .bytes()?
        .try_into()
        .map_err(|_| GsneError::load(path, "bad rng seed length"))?;
    let rng = SeededRng::from_state(RngState {
        seed,
        stream: d.u64()?,
        word_pos: d.u128()?,
    });
    let mut models = Vec::new();
    for &order in config.proximity.orders() {
        let mut meta = c.require(tag(order, b"MET"))?;
        let seed = meta.u64()?;
        let dims: Vec<usize> = meta.u32s()?.into_iter().map(|d| d as usize).collect();
        let with_ctx = order == Order::Second;
        let mut params = ParamStore::init(config.encoder, &dims, seed, with_ctx)?;
        get_slices(&mut c.require(tag(order, b"ATR"))?, params.attr.slices_mut(), path)?;
        if let Some(ctx) = &mut params.ctx {
            get_slices(&mut c.require(tag(order, b"CTX"))?, ctx.slices_mut(), path)?;
        }
        let mut opt = OptimizerState::new(&params);
        let mut d = c.require(tag(order, b"OPT"))?;
        opt.step = d.u64()?;
        let OptimizerState { m, v, .. } = &mut opt;
        get_slices(&mut d, m.iter_mut().chain(v.iter_mut()).map(|s| s.as_mut_slice()).collect(), path)?;
        models.push(Model { order, params, opt });
    }
    let mut d = c.require(*b"HIST")?;
    let n = d.u64()? as usize;
    let mut history = Vec::with_capacity(n);
    for _ in 0..n {
        let iteration = d.u64()?;
        let edge_set =
            EdgeSetKind::from_code(d.u8()?).ok_or_else(|| GsneError::load(path, "bad edge-set code in history"))?;
        let order = match d.u8()? {
            0 => Order::First,
            1 => Order::Second,
            _ => return Err(GsneError::load(path, "bad order code in history")),
        };
        history.push(LossRecord {
            iteration,
            edge_set,
            order,
            loss: d.f64()?,
        });
    }
    Ok(TrainState {
        config,
        models,
        iteration,
        rng,
        history,
    })
}

/// Write `loss_first.csv` and/or `loss_second.csv` into `dir`.
pub fn write_loss_csv(state: &TrainState, dir: &Path) -> Result<Vec<std::path::PathBuf>> {
    let mut written = Vec::new();
    for m in &state.models {
        let path = dir.join(format!("loss_{}.csv", m.order.name()));
        let mut out = String::from("iteration,edge_set,loss\n");
        for r in state.history.iter().filter(|r| r.order == m.order) {
            out.push_str(&format!("{},{},{}\n", r.iteration, r.edge_set, r.loss));
        }
        let mut f = std::fs::File::create(&path).map_err(|e| GsneError::io(&path, e))?;
        f.write_all(out.as_bytes()).map_err(|e| GsneError::io(&path, e))?;
        written.push(path);
    }
    Ok(written)
}
