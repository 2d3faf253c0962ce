//! Binary checkpoint format: magic "SFLC", version-tagged, little-endian
//! throughout. Stores the trainable layers, the optimizer velocities and the
//! training configuration echo; bank kernels are re-synthesized from the
//! stored scales on load and verified against a stored checksum.

use std::io::Read;
use std::path::Path;

use byteorder::{LittleEndian as LE, ReadBytesExt, WriteBytesExt};

use crate::activation::Activation;
use crate::conv::{ConvLayer, Stride};
use crate::error::{Error, Result};
use crate::logbank::LoGBank;
use crate::model::{CaeModel, OptimizerState, ParamSet, TrainConfig};

pub const MAGIC: [u8; 4] = *b"SFLC";
pub const VERSION: u16 = 1;

fn stride_tag(stride: Stride) -> u8 {
    match stride {
        Stride::One => 1,
        Stride::Two => 2,
        Stride::Half => 3,
    }
}

fn stride_from_tag(tag: u8) -> Option<Stride> {
    match tag {
        1 => Some(Stride::One),
        2 => Some(Stride::Two),
        3 => Some(Stride::Half),
        _ => None,
    }
}

fn activation_tag(a: Activation) -> u8 {
    match a {
        Activation::Relu => 0,
        Activation::Tanh => 1,
        Activation::Identity => 2,
    }
}

fn activation_from_tag(tag: u8) -> Option<Activation> {
    match tag {
        0 => Some(Activation::Relu),
        1 => Some(Activation::Tanh),
        2 => Some(Activation::Identity),
        _ => None,
    }
}

/// CRC-32 (IEEE), bitwise.
fn crc32(data: &[u8]) -> u32 {
    let mut crc = 0xFFFF_FFFFu32;
    for &b in data {
        crc ^= b as u32;
        for _ in 0..8 {
            let mask = (crc & 1).wrapping_neg();
            crc = (crc >> 1) ^ (0xEDB8_8320 & mask);
        }
    }
    !crc
}

fn bank_kernel_crc(bank: &LoGBank<f32>) -> u32 {
    let mut bytes = Vec::new();
    for kernel in bank.kernels() {
        for &c in kernel.coeffs() {
            bytes.extend_from_slice(&c.to_le_bytes());
        }
    }
    crc32(&bytes)
}

pub fn save_checkpoint(
    model: &CaeModel<f32>,
    state: &OptimizerState<f32>,
    config: &TrainConfig<f32>,
    epoch: u32,
    path: impl AsRef<Path>,
) -> Result<()> {
    let path = path.as_ref();
    if state.velocities.len() != model.layers().len() {
        return Err(Error::internal("optimizer state does not match the model"));
    }

    let mut out: Vec<u8> = Vec::new();
    out.extend_from_slice(&MAGIC);
    out.write_u16::<LE>(VERSION).unwrap();
    out.write_u32::<LE>(epoch).unwrap();
    out.write_f32::<LE>(config.learning_rate).unwrap();
    out.write_f32::<LE>(config.momentum).unwrap();

    out.write_u32::<LE>(config.weights.pixel.len() as u32).unwrap();
    for &w in &config.weights.pixel {
        out.write_f32::<LE>(w).unwrap();
    }
    out.write_u32::<LE>(config.scales.len() as u32).unwrap();
    for &s in &config.scales {
        out.write_f64::<LE>(s).unwrap();
    }
    for &w in &config.weights.subband {
        out.write_f32::<LE>(w).unwrap();
    }
    out.write_u32::<LE>(model.image_channels() as u32).unwrap();

    out.write_u32::<LE>(model.layers().len() as u32).unwrap();
    for layer in model.layers() {
        out.write_u32::<LE>(layer.in_channels() as u32).unwrap();
        out.write_u32::<LE>(layer.out_channels() as u32).unwrap();
        out.write_u32::<LE>(layer.half_size() as u32).unwrap();
        out.push(stride_tag(layer.stride()));
        out.push(activation_tag(layer.activation()));
        out.push(layer.trainable() as u8);
    }
    for layer in model.layers() {
        for &w in layer.weights() {
            out.write_f32::<LE>(w).unwrap();
        }
        for &b in layer.biases() {
            out.write_f32::<LE>(b).unwrap();
        }
    }
    for vel in &state.velocities {
        for &w in &vel.weights {
            out.write_f32::<LE>(w).unwrap();
        }
        for &b in &vel.biases {
            out.write_f32::<LE>(b).unwrap();
        }
    }
    out.write_u32::<LE>(bank_kernel_crc(model.bank())).unwrap();

    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(
    path: impl AsRef<Path>,
) -> Result<(CaeModel<f32>, OptimizerState<f32>, u32)> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut r = std::io::Cursor::new(bytes.as_slice());
    let fail = |detail: &str| Error::format(path, detail);
    let eof = |_: std::io::Error| Error::format(path, "truncated checkpoint");

    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(eof)?;
    if magic != MAGIC {
        return Err(fail("bad magic bytes"));
    }
    let version = r.read_u16::<LE>().map_err(eof)?;
    if version != VERSION {
        return Err(fail(&format!(
            "unsupported checkpoint version {version} (expected {VERSION})"
        )));
    }
    let epoch = r.read_u32::<LE>().map_err(eof)?;
    let _lr = r.read_f32::<LE>().map_err(eof)?;
    let _momentum = r.read_f32::<LE>().map_err(eof)?;

    let n_wpl = r.read_u32::<LE>().map_err(eof)? as usize;
    if n_wpl > 1 << 16 {
        return Err(fail("implausible pixel-weight count"));
    }
    let mut w_pl = Vec::with_capacity(n_wpl);
    for _ in 0..n_wpl {
        w_pl.push(r.read_f32::<LE>().map_err(eof)?);
    }
    let n_scales = r.read_u32::<LE>().map_err(eof)? as usize;
    if n_scales == 0 || n_scales > 1 << 16 {
        return Err(fail("implausible scale count"));
    }
    let mut scales = Vec::with_capacity(n_scales);
    for _ in 0..n_scales {
        scales.push(r.read_f64::<LE>().map_err(eof)?);
    }
    let mut w_sfl = Vec::with_capacity(n_scales);
    for _ in 0..n_scales {
        w_sfl.push(r.read_f32::<LE>().map_err(eof)?);
    }
    let image_channels = r.read_u32::<LE>().map_err(eof)? as usize;

    let n_layers = r.read_u32::<LE>().map_err(eof)? as usize;
    if n_layers == 0 || n_layers > 1 << 10 {
        return Err(fail("implausible layer count"));
    }
    struct Descriptor {
        in_ch: usize,
        out_ch: usize,
        half: usize,
        stride: Stride,
        activation: Activation,
        trainable: bool,
    }
    let mut descriptors = Vec::with_capacity(n_layers);
    for _ in 0..n_layers {
        let in_ch = r.read_u32::<LE>().map_err(eof)? as usize;
        let out_ch = r.read_u32::<LE>().map_err(eof)? as usize;
        let half = r.read_u32::<LE>().map_err(eof)? as usize;
        let stride = stride_from_tag(r.read_u8().map_err(eof)?)
            .ok_or_else(|| fail("unknown stride tag"))?;
        let activation = activation_from_tag(r.read_u8().map_err(eof)?)
            .ok_or_else(|| fail("unknown activation tag"))?;
        let trainable = match r.read_u8().map_err(eof)? {
            0 => false,
            1 => true,
            _ => return Err(fail("bad trainable flag")),
        };
        descriptors.push(Descriptor {
            in_ch,
            out_ch,
            half,
            stride,
            activation,
            trainable,
        });
    }

    let mut read_f32s = |n: usize| -> Result<Vec<f32>> {
        let mut v = Vec::with_capacity(n);
        for _ in 0..n {
            v.push(r.read_f32::<LE>().map_err(eof)?);
        }
        Ok(v)
    };

    let mut layers = Vec::with_capacity(n_layers);
    for d in &descriptors {
        let k = 2 * d.half + 1;
        let weights = read_f32s(d.out_ch * d.in_ch * k * k)?;
        let biases = read_f32s(d.out_ch)?;
        layers.push(
            ConvLayer::from_parts(
                d.in_ch, d.out_ch, d.half, d.stride, d.activation, d.trainable, weights, biases,
            )
            .map_err(|e| Error::format(path, format!("inconsistent layer payload: {e}")))?,
        );
    }
    let mut velocities = Vec::with_capacity(n_layers);
    for d in &descriptors {
        let k = 2 * d.half + 1;
        let weights = read_f32s(d.out_ch * d.in_ch * k * k)?;
        let biases = read_f32s(d.out_ch)?;
        velocities.push(ParamSet { weights, biases });
    }
    let stored_crc = r.read_u32::<LE>().map_err(eof)?;
    if (r.position() as usize) != bytes.len() {
        return Err(fail("trailing bytes after checkpoint payload"));
    }

    let bank = LoGBank::new(&scales, &w_sfl, image_channels)
        .map_err(|e| Error::format(path, format!("invalid bank parameters: {e}")))?;
    if bank_kernel_crc(&bank) != stored_crc {
        return Err(fail("bank kernel checksum mismatch"));
    }

    let model = CaeModel::from_parts(layers, bank);
    Ok((model, OptimizerState { velocities }, epoch))
}
