//! On-disk formats for datasets, training history and trained models.
//!
//! Model file layout, all little-endian:
//!
//! ```text
//! magic        8 bytes  "PHOREGv\0"
//! version      u32
//! activation   u32      0 = relu, 1 = tanh
//! n_layers     u32
//! sizes        u32 * n_layers
//! input_min    f64 * 3
//! input_max    f64 * 3
//! label_min    f64
//! label_max    f64
//! n_params     u64
//! params       f64 * n_params   (per layer: row-major weights, then biases)
//! ```

use std::io::{Read, Write};

use super::net::{Activation, Normalizer, RegressionNet, INPUTS};
use super::{EpochLoss, Sample};
use crate::error::PredictorError;

pub const MODEL_MAGIC: [u8; 8] = *b"PHOREGv\0";
pub const MODEL_VERSION: u32 = 1;

pub fn write_model<W: Write>(net: &RegressionNet, mut w: W) -> Result<(), PredictorError> {
    w.write_all(&MODEL_MAGIC)?;
    w.write_all(&MODEL_VERSION.to_le_bytes())?;
    w.write_all(&net.activation().code().to_le_bytes())?;
    w.write_all(&(net.sizes().len() as u32).to_le_bytes())?;
    for &s in net.sizes() {
        w.write_all(&(s as u32).to_le_bytes())?;
    }
    let n = &net.normalizer;
    for v in n
        .input_min
        .iter()
        .chain(&n.input_max)
        .chain([&n.label_min, &n.label_max])
    {
        w.write_all(&v.to_le_bytes())?;
    }
    w.write_all(&(net.params().len() as u64).to_le_bytes())?;
    for p in net.params() {
        w.write_all(&p.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32, PredictorError> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64, PredictorError> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn read_f64<R: Read>(r: &mut R) -> Result<f64, PredictorError> {
    Ok(f64::from_bits(read_u64(r)?))
}

pub fn read_model<R: Read>(mut r: R) -> Result<RegressionNet, PredictorError> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if magic != MODEL_MAGIC {
        return Err(PredictorError::ModelFormat("bad magic".into()));
    }
    let version = read_u32(&mut r)?;
    if version != MODEL_VERSION {
        return Err(PredictorError::ModelFormat(format!(
            "unsupported version {version}"
        )));
    }
    let activation = Activation::from_code(read_u32(&mut r)?)
        .ok_or_else(|| PredictorError::ModelFormat("unknown activation".into()))?;
    let n_layers = read_u32(&mut r)? as usize;
    if !(2..=64).contains(&n_layers) {
        return Err(PredictorError::ModelFormat(format!(
            "implausible layer count {n_layers}"
        )));
    }
    let sizes = (0..n_layers)
        .map(|_| read_u32(&mut r).map(|s| s as usize))
        .collect::<Result<Vec<_>, _>>()?;
    let mut norm = Normalizer::identity();
    for i in 0..INPUTS {
        norm.input_min[i] = read_f64(&mut r)?;
    }
    for i in 0..INPUTS {
        norm.input_max[i] = read_f64(&mut r)?;
    }
    norm.label_min = read_f64(&mut r)?;
    norm.label_max = read_f64(&mut r)?;
    let n_params = read_u64(&mut r)? as usize;
    if n_params != super::net::param_count(&sizes) {
        return Err(PredictorError::ModelFormat(format!(
            "header declares {n_params} parameters for sizes {sizes:?}"
        )));
    }
    let params = (0..n_params)
        .map(|_| read_f64(&mut r))
        .collect::<Result<Vec<_>, _>>()?;
    RegressionNet::from_parts(sizes, activation, params, norm)
}

/// CSV with header `x_m,y_m,speed_mps,t_to_blk_s`.
pub fn write_dataset_csv<W: Write>(rows: &[Sample], w: W) -> Result<(), PredictorError> {
    let mut wr = csv::Writer::from_writer(w);
    for s in rows {
        wr.serialize(s)?;
    }
    wr.flush()?;
    Ok(())
}

pub fn read_dataset_csv<R: Read>(r: R) -> Result<Vec<Sample>, PredictorError> {
    let mut rd = csv::Reader::from_reader(r);
    let rows = rd.deserialize().collect::<Result<Vec<Sample>, _>>()?;
    if rows.is_empty() {
        return Err(PredictorError::InvalidDataset("no rows".into()));
    }
    Ok(rows)
}

/// CSV with header `epoch,train_mse,val_mse`.
pub fn write_history_csv<W: Write>(history: &[EpochLoss], w: W) -> Result<(), PredictorError> {
    let mut wr = csv::Writer::from_writer(w);
    for e in history {
        wr.serialize(e)?;
    }
    wr.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn sample_net(seed: u64) -> RegressionNet {
        let norm = Normalizer {
            input_min: [0.0, 0.0, 2.2352],
            input_max: [90.0, 15.0, 15.6464],
            label_min: 0.0,
            label_max: 25.5,
        };
        RegressionNet::new(
            &[5, 4],
            Activation::Relu,
            norm,
            &mut ChaCha8Rng::seed_from_u64(seed),
        )
    }

    proptest! {
        #[test]
        fn model_round_trips_bit_exact(seed in any::<u64>()) {
            let net = sample_net(seed);
            let mut buf = Vec::new();
            write_model(&net, &mut buf).unwrap();
            let back = read_model(buf.as_slice()).unwrap();
            prop_assert_eq!(back, net);
        }

        #[test]
        fn dataset_csv_round_trips(rows in proptest::collection::vec((0.0..90.0f64, 0.0..15.0f64, 0.1..20.0f64, 0.0..50.0f64), 1..40)) {
            let rows: Vec<Sample> = rows.into_iter().map(|(x, y, speed, t)| Sample { x, y, speed, t_to_blk: t }).collect();
            let mut buf = Vec::new();
            write_dataset_csv(&rows, &mut buf).unwrap();
            prop_assert_eq!(read_dataset_csv(buf.as_slice()).unwrap(), rows);
        }
    }

    #[test]
    fn header_layout() {
        let net = sample_net(1);
        let mut buf = Vec::new();
        write_model(&net, &mut buf).unwrap();
        assert_eq!(&buf[..8], b"PHOREGv\0");
        assert_eq!(u32::from_le_bytes(buf[8..12].try_into().unwrap()), 1);
        assert_eq!(u32::from_le_bytes(buf[16..20].try_into().unwrap()), 4);
        let expected = 8 + 4 + 4 + 4 + 4 * 4 + 8 * 8 + 8 + 8 * net.params().len();
        assert_eq!(buf.len(), expected);
    }

    #[test]
    fn corrupt_files_are_rejected() {
        let net = sample_net(2);
        let mut buf = Vec::new();
        write_model(&net, &mut buf).unwrap();
        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(matches!(
            read_model(bad.as_slice()),
            Err(PredictorError::ModelFormat(_))
        ));
        let truncated = &buf[..buf.len() - 3];
        assert!(matches!(read_model(truncated), Err(PredictorError::Io(_))));
        let mut wrong_version = buf.clone();
        wrong_version[8] = 9;
        assert!(read_model(wrong_version.as_slice()).is_err());
    }

    #[test]
    fn dataset_header_and_history() {
        let mut buf = Vec::new();
        write_dataset_csv(
            &[Sample {
                x: 1.0,
                y: 2.0,
                speed: 3.0,
                t_to_blk: 4.0,
            }],
            &mut buf,
        )
        .unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().next(), Some("x_m,y_m,speed_mps,t_to_blk_s"));
        assert!(read_dataset_csv("x_m,y_m,speed_mps,t_to_blk_s\n".as_bytes()).is_err());

        let mut buf = Vec::new();
        write_history_csv(
            &[EpochLoss {
                epoch: 1,
                train_mse: 0.5,
                val_mse: 0.25,
            }],
            &mut buf,
        )
        .unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "epoch,train_mse,val_mse\n1,0.5,0.25\n"
        );
    }
}
