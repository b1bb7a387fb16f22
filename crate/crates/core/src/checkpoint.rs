//! Binary weight checkpoints.
//!
//! Layout, all little-endian: an 8-byte magic, a `u32` format version,
//! architecture, coding, drive, membrane-reset and TTFS-activity tags, the weight seed, neuron and network
//! parameters, the readout range and time step, then the five weight
//! blocks (U_i, J, J_D, W, U_o) as `rows: u64, cols: u64` followed by
//! row-major `f64` entries. A SHA-256 digest of everything before it closes
//! the file.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::network::{Architecture, NetworkParams, TargetDrive, WeightSet};
use crate::neuron::{Coding, NeuronParams, TtfsActivity, TtfsParams};
use crate::trainer::Model;

const MAGIC: &[u8; 8] = b"SPKFORCE";
const VERSION: u32 = 1;
const DIGEST_LEN: usize = 32;

/// Serialises `model` into the checkpoint format.
pub fn to_bytes(model: &Model) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    let w = &model.weights;
    out.push(match w.architecture {
        Architecture::Force => 0,
        Architecture::FullForce => 1,
    });
    out.push(match model.coding {
        Coding::Rate => 0,
        Coding::Ttfs => 1,
    });
    out.push(match model.network.target_drive {
        TargetDrive::Fout => 0,
        TargetDrive::Z => 1,
    });
    out.push(model.network.ttfs.reset_membrane as u8);
    out.push(match model.network.ttfs.activity {
        TtfsActivity::Held => 0,
        TtfsActivity::Filtered => 1,
    });
    out.extend_from_slice(&w.seed.to_le_bytes());

    let n = &model.neuron;
    let p = &model.network;
    let scalars = [
        n.tau,
        n.capacitance,
        n.resistance,
        n.v_th,
        n.v_rest,
        n.tau_ref,
        n.i_bias,
        p.gain,
        p.sparsity,
        p.bias,
        p.recurrent_gain,
        p.feedback_gain,
        p.input_gain,
        p.rate_tau,
        p.readout_rate_max,
        p.ttfs.theta0,
        p.ttfs.tau_threshold,
        p.ttfs.tau_inhibit,
        p.ttfs.window,
        model.target_range.0,
        model.target_range.1,
        model.dt,
    ];
    out.extend_from_slice(&(p.neurons as u64).to_le_bytes());
    for v in scalars {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for m in [&w.input, &w.recurrent, &w.target_recurrent, &w.readout, &w.feedback] {
        out.extend_from_slice(&(m.rows() as u64).to_le_bytes());
        out.extend_from_slice(&(m.cols() as u64).to_le_bytes());
        for v in m.as_slice() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    let digest = Sha256::digest(&out);
    out.extend_from_slice(&digest);
    out
}

/// Parses a checkpoint, verifying magic, version and digest.
pub fn from_bytes(bytes: &[u8]) -> Result<Model> {
    if bytes.len() < MAGIC.len() + DIGEST_LEN || &bytes[..MAGIC.len()] != MAGIC {
        return Err(Error::Integrity("not a checkpoint file".into()));
    }
    let (body, digest) = bytes.split_at(bytes.len() - DIGEST_LEN);
    if Sha256::digest(body).as_slice() != digest {
        return Err(Error::Integrity("checksum mismatch".into()));
    }
    let mut r = Reader { bytes: body, pos: MAGIC.len() };
    let version = u32::from_le_bytes(r.take::<4>()?);
    if version != VERSION {
        return Err(Error::Integrity(format!("unsupported checkpoint version {version}")));
    }
    let architecture = match r.byte()? {
        0 => Architecture::Force,
        1 => Architecture::FullForce,
        t => return Err(Error::Integrity(format!("unknown architecture tag {t}"))),
    };
    let coding = match r.byte()? {
        0 => Coding::Rate,
        1 => Coding::Ttfs,
        t => return Err(Error::Integrity(format!("unknown coding tag {t}"))),
    };
    let target_drive = match r.byte()? {
        0 => TargetDrive::Fout,
        1 => TargetDrive::Z,
        t => return Err(Error::Integrity(format!("unknown target drive tag {t}"))),
    };
    let reset = match r.byte()? {
        0 => false,
        1 => true,
        t => return Err(Error::Integrity(format!("invalid membrane reset flag {t}"))),
    };
    let activity = match r.byte()? {
        0 => TtfsActivity::Held,
        1 => TtfsActivity::Filtered,
        t => return Err(Error::Integrity(format!("unknown TTFS activity tag {t}"))),
    };
    let seed = r.u64()?;
    let neurons = r.u64()? as usize;
    let mut s = [0.0; 22];
    for v in &mut s {
        *v = r.f64()?;
    }
    let neuron = NeuronParams {
        tau: s[0],
        capacitance: s[1],
        resistance: s[2],
        v_th: s[3],
        v_rest: s[4],
        tau_ref: s[5],
        i_bias: s[6],
    };
    let network = NetworkParams {
        neurons,
        gain: s[7],
        sparsity: s[8],
        bias: s[9],
        recurrent_gain: s[10],
        feedback_gain: s[11],
        input_gain: s[12],
        rate_tau: s[13],
        readout_rate_max: s[14],
        target_drive,
        ttfs: TtfsParams { theta0: s[15], tau_threshold: s[16], tau_inhibit: s[17], window: s[18], reset_membrane: reset, activity },
    };
    let mut blocks = Vec::with_capacity(5);
    for _ in 0..5 {
        blocks.push(r.matrix()?);
    }
    if r.pos != body.len() {
        return Err(Error::Integrity(format!("{} trailing bytes", body.len() - r.pos)));
    }
    let [input, recurrent, target_recurrent, readout, feedback]: [Matrix; 5] =
        blocks.try_into().expect("five blocks");
    let weights = WeightSet { architecture, seed, input, recurrent, target_recurrent, readout, feedback };
    weights.validate().map_err(|e| Error::Integrity(e.to_string()))?;
    if weights.neurons() != neurons {
        return Err(Error::Integrity("neuron count disagrees with weight shapes".into()));
    }
    Ok(Model { weights, network, neuron, coding, target_range: (s[19], s[20]), dt: s[21] })
}

pub fn write<W: Write>(model: &Model, mut w: W) -> Result<()> {
    w.write_all(&to_bytes(model))?;
    Ok(())
}

pub fn read<R: Read>(mut r: R) -> Result<Model> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    from_bytes(&bytes)
}

pub fn save(model: &Model, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, to_bytes(model))?;
    Ok(())
}

pub fn load(path: impl AsRef<Path>) -> Result<Model> {
    from_bytes(&fs::read(path)?)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take<const K: usize>(&mut self) -> Result<[u8; K]> {
        let end = self.pos + K;
        let slice = self
            .bytes
            .get(self.pos..end)
            .ok_or_else(|| Error::Integrity("truncated checkpoint".into()))?;
        self.pos = end;
        Ok(slice.try_into().expect("length checked"))
    }

    fn byte(&mut self) -> Result<u8> {
        Ok(self.take::<1>()?[0])
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take::<8>()?))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take::<8>()?))
    }

    fn matrix(&mut self) -> Result<Matrix> {
        let rows = self.u64()? as usize;
        let cols = self.u64()? as usize;
        let len = rows
            .checked_mul(cols)
            .filter(|&l| l.saturating_mul(8) <= self.bytes.len() - self.pos)
            .ok_or_else(|| Error::Integrity(format!("implausible block shape {rows}×{cols}")))?;
        let data = (0..len).map(|_| self.f64()).collect::<Result<Vec<_>>>()?;
        Matrix::from_vec(rows, cols, data)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::init_weights;

    fn model(arch: Architecture, coding: Coding) -> Model {
        let mut weights = init_weights(30, 2, 3, 1.5, 0.1, arch, 11).unwrap();
        weights.readout = Matrix::from_fn(3, 30, |o, i| ((o * 31 + i) as f64).sin() * 1e-3);
        Model {
            weights,
            network: NetworkParams { neurons: 30, bias: 0.7, target_drive: TargetDrive::Z, ..Default::default() },
            neuron: NeuronParams { tau_ref: 0.003, ..Default::default() },
            coding,
            target_range: (-0.25, 1.5),
            dt: 1e-3,
        }
    }

    #[test]
    fn round_trip_is_bit_exact() {
        for (arch, coding) in [(Architecture::Force, Coding::Rate), (Architecture::FullForce, Coding::Ttfs)] {
            let m = model(arch, coding);
            let bytes = to_bytes(&m);
            let back = from_bytes(&bytes).unwrap();
            assert_eq!(back, m);
            for (a, b) in back.weights.readout.as_slice().iter().zip(m.weights.readout.as_slice()) {
                assert_eq!(a.to_bits(), b.to_bits());
            }
            assert_eq!(to_bytes(&back), bytes);
        }
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("w.ckpt");
        let m = model(Architecture::FullForce, Coding::Rate);
        save(&m, &path).unwrap();
        assert_eq!(load(&path).unwrap(), m);
    }

    #[test]
    fn corruption_is_detected() {
        let bytes = to_bytes(&model(Architecture::FullForce, Coding::Rate));
        for pos in [0, 9, 40, bytes.len() / 2, bytes.len() - 1] {
            let mut bad = bytes.clone();
            bad[pos] ^= 0x10;
            assert!(matches!(from_bytes(&bad), Err(Error::Integrity(_))), "flip at {pos}");
        }
        assert!(matches!(from_bytes(&bytes[..bytes.len() - 5]), Err(Error::Integrity(_))));
        assert!(matches!(from_bytes(b"hello"), Err(Error::Integrity(_))));
    }

    #[test]
    fn bad_tags_are_rejected_even_with_valid_digest() {
        let mut bytes = to_bytes(&model(Architecture::Force, Coding::Rate));
        bytes.truncate(bytes.len() - DIGEST_LEN);
        bytes[12] = 7;
        let digest = Sha256::digest(&bytes);
        bytes.extend_from_slice(&digest);
        assert!(matches!(from_bytes(&bytes), Err(Error::Integrity(_))));
    }
}
