//! Checkpoint format: magic `SPS1`, version, variant tag, then the ordered
//! list of (name, shape, binary64 row-major array) covering parameters,
//! batch-norm running statistics, and Adam moments, with a CRC32 footer.

use std::path::Path;

use super::model::{ChannelConfig, SpsModel, Variant};
use super::optim::Adam;
use crate::io::{self, FormatError, Reader, Writer};

const MAGIC: [u8; 4] = *b"SPS1";
const VERSION: u32 = 1;

fn write_array(w: &mut Writer, name: &str, shape: &[usize], values: &[f64]) {
    w.u32(name.len() as u32);
    w.bytes(name.as_bytes());
    w.u8(shape.len() as u8);
    for &d in shape {
        w.u32(d as u32);
    }
    for &v in values {
        w.f64(v);
    }
}

fn read_array(r: &mut Reader) -> Result<(String, Vec<usize>, Vec<f64>), FormatError> {
    let name_len = r.u32()? as usize;
    let name = String::from_utf8(r.take(name_len)?.to_vec())
        .map_err(|e| FormatError::Malformed(format!("bad array name: {}", e)))?;
    let ndim = r.u8()? as usize;
    let mut shape = Vec::with_capacity(ndim);
    for _ in 0..ndim {
        shape.push(r.u32()? as usize);
    }
    let n: usize = shape.iter().product();
    let mut values = Vec::with_capacity(n);
    for _ in 0..n {
        values.push(r.f64()?);
    }
    Ok((name, shape, values))
}

pub fn checkpoint_to_bytes(model: &SpsModel, adam: Option<&Adam>) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    let mut w = Writer::new();
    w.u8(match model.variant {
        Variant::Bel => 1,
        Variant::NoBel => 0,
    });
    w.u32(model.channels.torso as u32);
    w.u32(model.channels.head_mid as u32);
    w.u32(model.channels.head_small as u32);
    w.u64(model.init_seed);
    let params = model.params();
    let stats = model.running_stats();
    let adam_arrays = adam.map(|a| (a.step, &a.slots));
    let n_arrays = params.len()
        + stats.len()
        + adam_arrays.as_ref().map_or(0, |(_, slots)| slots.len() * 2);
    w.u32(n_arrays as u32);
    w.u64(adam_arrays.as_ref().map_or(0, |(step, _)| *step));
    for p in &params {
        write_array(&mut w, &p.name, &p.shape, &p.value);
    }
    for (name, values) in &stats {
        write_array(&mut w, name, &[values.len()], values);
    }
    if let Some((_, slots)) = adam_arrays {
        for (p, slot) in params.iter().zip(slots.iter()) {
            write_array(&mut w, &format!("{}.adam_m", p.name), &p.shape, &slot.m);
            write_array(&mut w, &format!("{}.adam_v", p.name), &p.shape, &slot.v);
        }
    }
    io::write_section(&mut out, &w.finish());
    out
}

/// Restores a model (and optionally the optimizer) from checkpoint bytes.
pub fn checkpoint_from_bytes(bytes: &[u8]) -> Result<(SpsModel, Option<Adam>), FormatError> {
    let mut r = Reader::new(bytes);
    if r.take(4)? != MAGIC {
        return Err(FormatError::BadMagic { expected: MAGIC });
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(FormatError::Version { found: version, supported: VERSION });
    }
    let mut s = r.section()?;
    let variant = if s.u8()? == 1 { Variant::Bel } else { Variant::NoBel };
    let channels = ChannelConfig {
        torso: s.u32()? as usize,
        head_mid: s.u32()? as usize,
        head_small: s.u32()? as usize,
    };
    let init_seed = s.u64()?;
    let n_arrays = s.u32()? as usize;
    let adam_step_count = s.u64()?;

    let mut model = SpsModel::new(variant, channels, init_seed);
    let mut arrays = std::collections::HashMap::new();
    for _ in 0..n_arrays {
        let (name, _shape, values) = read_array(&mut s)?;
        arrays.insert(name, values);
    }
    let mut stats = Vec::new();
    for p in model.params_mut() {
        let values = arrays
            .get(&p.name)
            .ok_or_else(|| FormatError::Malformed(format!("missing parameter {}", p.name)))?;
        if values.len() != p.numel() {
            return Err(FormatError::Malformed(format!(
                "parameter {} has {} values, expected {}",
                p.name,
                values.len(),
                p.numel()
            )));
        }
        p.value = values.clone();
    }
    for (name, values) in &arrays {
        if name.ends_with(".running_mean") || name.ends_with(".running_var") {
            stats.push((name.clone(), values.clone()));
        }
    }
    model.set_running_stats(&stats);

    let adam = if adam_step_count > 0 || arrays.keys().any(|k| k.ends_with(".adam_m")) {
        let mut a = Adam::new(&model);
        a.step = adam_step_count;
        for (p, slot) in model.params().iter().zip(a.slots.iter_mut()) {
            if let Some(m) = arrays.get(&format!("{}.adam_m", p.name)) {
                slot.m = m.clone();
            }
            if let Some(v) = arrays.get(&format!("{}.adam_v", p.name)) {
                slot.v = v.clone();
            }
        }
        Some(a)
    } else {
        None
    };
    Ok((model, adam))
}

pub fn save_checkpoint(
    model: &SpsModel,
    adam: Option<&Adam>,
    path: &Path,
) -> Result<(), FormatError> {
    io::atomic_write(path, &checkpoint_to_bytes(model, adam))?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<(SpsModel, Option<Adam>), FormatError> {
    let bytes = std::fs::read(path)?;
    checkpoint_from_bytes(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_preserves_everything() {
        let mut model = SpsModel::new(Variant::Bel, ChannelConfig::reduced(), 42);
        // Perturb running stats so the round trip is non-trivial.
        let mut stats = model.running_stats();
        for (_, v) in stats.iter_mut() {
            v.iter_mut().enumerate().for_each(|(i, x)| *x += i as f64 * 0.01);
        }
        model.set_running_stats(&stats);
        let mut adam = Adam::new(&model);
        adam.step = 17;
        adam.slots[0].m[0] = 0.5;
        let bytes = checkpoint_to_bytes(&model, Some(&adam));
        let (loaded, adam2) = checkpoint_from_bytes(&bytes).unwrap();
        for (a, b) in model.params().iter().zip(loaded.params().iter()) {
            assert_eq!(a.name, b.name);
            assert_eq!(a.value, b.value);
        }
        assert_eq!(model.running_stats(), loaded.running_stats());
        let adam2 = adam2.unwrap();
        assert_eq!(adam2.step, 17);
        assert_eq!(adam2.slots[0].m[0], 0.5);
        // Deterministic serialization.
        assert_eq!(bytes, checkpoint_to_bytes(&loaded, Some(&adam2)));
    }

    #[test]
    fn corrupted_checkpoint_is_rejected() {
        let model = SpsModel::new(Variant::NoBel, ChannelConfig::reduced(), 1);
        let mut bytes = checkpoint_to_bytes(&model, None);
        let n = bytes.len();
        bytes[n - 20] ^= 0x01;
        assert!(checkpoint_from_bytes(&bytes).is_err());
    }

    #[test]
    fn variant_tag_round_trips() {
        for variant in [Variant::Bel, Variant::NoBel] {
            let model = SpsModel::new(variant, ChannelConfig::reduced(), 3);
            let (loaded, _) = checkpoint_from_bytes(&checkpoint_to_bytes(&model, None)).unwrap();
            assert_eq!(loaded.variant, variant);
            assert_eq!(loaded.param_count(), model.param_count());
        }
    }
}
