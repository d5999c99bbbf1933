//! Model files.
//!
//! Binary layout, little-endian: the magic `SGMM4D01`, a `u32` component
//! count `M`, then `f32` weights `[M]`, means `[M·4]` and packed covariances
//! `[M·10]`. A JSON mirror with fields `weights`, `means` and
//! `covariances_packed` stores full `f64` values for debugging.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::{cholesky4, Packed4};

use super::Gmm4;

pub const MAGIC: &[u8; 8] = b"SGMM4D01";
const HEADER_LEN: usize = 12;

/// Tolerated drift of the stored weight sum before a file is rejected.
pub const WEIGHT_SUM_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ModelFormat {
    #[default]
    Binary,
    Json,
}

impl std::str::FromStr for ModelFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "binary" | "bin" => Ok(Self::Binary),
            "json" => Ok(Self::Json),
            other => Err(Error::InvalidArgument(format!("unknown model format {other:?}"))),
        }
    }
}

#[derive(Serialize, Deserialize)]
struct JsonModel {
    weights: Vec<f64>,
    means: Vec<[f64; 4]>,
    covariances_packed: Vec<Packed4>,
}

pub fn encode_binary(model: &Gmm4) -> Vec<u8> {
    let m = model.len();
    let mut out = Vec::with_capacity(HEADER_LEN + 4 * 15 * m);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(m as u32).to_le_bytes());
    let mut put = |v: f64| out.extend_from_slice(&(v as f32).to_le_bytes());
    model.weights().iter().for_each(|&w| put(w));
    model.means().iter().flatten().for_each(|&v| put(v));
    model.covariances_packed().iter().flatten().for_each(|&v| put(v));
    out
}

pub fn decode_binary(bytes: &[u8]) -> Result<Gmm4> {
    if bytes.len() < MAGIC.len() || &bytes[..MAGIC.len()] != MAGIC {
        return Err(Error::BadMagic);
    }
    if bytes.len() < HEADER_LEN {
        return Err(Error::Truncated { expected: HEADER_LEN, found: bytes.len() });
    }
    let m = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let expected = HEADER_LEN + 4 * 15 * m;
    if bytes.len() < expected {
        return Err(Error::Truncated { expected, found: bytes.len() });
    }
    if bytes.len() > expected {
        return Err(Error::Format(format!("{} trailing bytes after model payload", bytes.len() - expected)));
    }
    let mut floats = bytes[HEADER_LEN..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64);
    let weights: Vec<f64> = floats.by_ref().take(m).collect();
    let means: Vec<[f64; 4]> = (0..m).map(|_| std::array::from_fn(|_| floats.next().unwrap())).collect();
    let covs: Vec<Packed4> = (0..m).map(|_| std::array::from_fn(|_| floats.next().unwrap())).collect();
    from_loaded_parts(weights, means, covs)
}

/// Validation shared by both loaders: positive weights renormalised when
/// their sum is within [`WEIGHT_SUM_TOLERANCE`] of one, SPD covariances.
pub(crate) fn from_loaded_parts(
    mut weights: Vec<f64>,
    means: Vec<[f64; 4]>,
    covariances: Vec<Packed4>,
) -> Result<Gmm4> {
    let m = weights.len();
    if m == 0 {
        return Err(Error::Format("model has no components".into()));
    }
    if means.len() != m || covariances.len() != m {
        return Err(Error::Format("component arrays have different lengths".into()));
    }
    if weights.iter().any(|w| !(*w > 0.0) || !w.is_finite()) {
        return Err(Error::Format("non-positive component weight".into()));
    }
    if means.iter().flatten().chain(covariances.iter().flatten()).any(|v| !v.is_finite()) {
        return Err(Error::Format("non-finite model parameter".into()));
    }
    let total: f64 = weights.iter().sum();
    if (total - 1.0).abs() > WEIGHT_SUM_TOLERANCE {
        return Err(Error::Format(format!("weights sum to {total}")));
    }
    if total != 1.0 {
        weights.iter_mut().for_each(|w| *w /= total);
    }
    if let Some(b) = covariances.iter().position(|c| cholesky4(c).is_none()) {
        return Err(Error::NotPositiveDefinite { component: b });
    }
    Ok(Gmm4::from_parts_unchecked(weights, means, covariances))
}

pub fn encode_json(model: &Gmm4) -> Result<String> {
    Ok(serde_json::to_string_pretty(&JsonModel {
        weights: model.weights().to_vec(),
        means: model.means().to_vec(),
        covariances_packed: model.covariances_packed().to_vec(),
    })?)
}

pub fn decode_json(text: &str) -> Result<Gmm4> {
    let j: JsonModel = serde_json::from_str(text)?;
    from_loaded_parts(j.weights, j.means, j.covariances_packed)
}

pub fn save_gmm(model: &Gmm4, path: impl AsRef<Path>, format: ModelFormat) -> Result<()> {
    match format {
        ModelFormat::Binary => fs::write(path, encode_binary(model))?,
        ModelFormat::Json => fs::write(path, encode_json(model)?)?,
    }
    Ok(())
}

/// Loads either format, detected from the first bytes.
pub fn load_gmm(path: impl AsRef<Path>) -> Result<Gmm4> {
    let bytes = fs::read(path)?;
    let first = bytes.iter().find(|b| !b.is_ascii_whitespace());
    if first == Some(&b'{') {
        let text = std::str::from_utf8(&bytes).map_err(|e| Error::Format(e.to_string()))?;
        decode_json(text)
    } else {
        decode_binary(&bytes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::{pack_lower, packed_diag, packed_identity, tri_index};
    use proptest::prelude::*;

    fn dyadic_model() -> Gmm4 {
        let mut c = packed_diag([0.5, 0.25, 2.0, 0.125]);
        c[tri_index(1, 0)] = 0.0625;
        Gmm4::new(
            vec![0.5, 0.25, 0.25],
            vec![[1.0, -2.0, 0.5, 0.75], [0.0; 4], [3.5, 3.25, -1.0, 0.0]],
            vec![c, packed_identity(), packed_diag([1.0, 2.0, 4.0, 8.0])],
        )
        .unwrap()
    }

    #[test]
    fn binary_round_trip_exact_for_f32_values() {
        let g = dyadic_model();
        assert_eq!(decode_binary(&encode_binary(&g)).unwrap(), g);
    }

    #[test]
    fn json_round_trip_exact() {
        let g = Gmm4::new(vec![0.3, 0.7], vec![[0.1, 0.2, 0.3, 0.4], [1.0 / 3.0; 4]], vec![packed_identity(); 2]).unwrap();
        assert_eq!(decode_json(&encode_json(&g).unwrap()).unwrap(), g);
    }

    #[test]
    fn wrong_magic() {
        let mut b = encode_binary(&dyadic_model());
        b[0] = b'X';
        assert!(matches!(decode_binary(&b), Err(Error::BadMagic)));
        assert!(matches!(decode_binary(b"SG"), Err(Error::BadMagic)));
    }

    #[test]
    fn truncated_mid_means() {
        let b = encode_binary(&dyadic_model());
        // header + 3 weights + 5 of 12 mean floats
        let cut = &b[..12 + 4 * 3 + 4 * 5];
        assert!(matches!(decode_binary(cut), Err(Error::Truncated { expected, found }) if expected == b.len() && found == cut.len()));
    }

    #[test]
    fn non_spd_on_load() {
        let mut b = encode_binary(&dyadic_model());
        // covariance block of component 1, entry (0,0) -> -1
        let off = 12 + 4 * 3 + 4 * 12 + 4 * 10;
        b[off..off + 4].copy_from_slice(&(-1.0f32).to_le_bytes());
        assert!(matches!(decode_binary(&b), Err(Error::NotPositiveDefinite { component: 1 })));
    }

    #[test]
    fn weight_sum_drift() {
        let mut b = encode_binary(&dyadic_model());
        b[12..16].copy_from_slice(&0.5000004f32.to_le_bytes());
        let g = decode_binary(&b).unwrap();
        assert!((g.weights().iter().sum::<f64>() - 1.0).abs() < 1e-12);
        b[12..16].copy_from_slice(&0.6f32.to_le_bytes());
        assert!(matches!(decode_binary(&b), Err(Error::Format(_))));
    }

    fn arb_model() -> impl Strategy<Value = Gmm4> {
        (1usize..6).prop_flat_map(|m| {
            (
                prop::collection::vec(0.05..1.0f64, m),
                prop::collection::vec(prop::array::uniform4(-10.0..10.0f64), m),
                prop::collection::vec(prop::array::uniform4(prop::array::uniform4(-1.0..1.0f64)), m),
            )
                .prop_map(|(w, mu, a)| {
                    let s: f64 = w.iter().sum();
                    let covs = a
                        .iter()
                        .map(|a| {
                            let mut c = [[0.0; 4]; 4];
                            for i in 0..4 {
                                for j in 0..4 {
                                    c[i][j] = (0..4).map(|k| a[i][k] * a[j][k]).sum::<f64>();
                                }
                                c[i][i] += 0.1;
                            }
                            pack_lower(&c)
                        })
                        .collect();
                    Gmm4::new(w.iter().map(|x| x / s).collect(), mu, covs).unwrap()
                })
        })
    }

    proptest! {
        #[test]
        fn binary_round_trip_is_f32_narrowing(g in arb_model()) {
            let back = decode_binary(&encode_binary(&g)).unwrap();
            prop_assert_eq!(&back, &g.to_f32_precision().unwrap());
        }
    }

    #[test]
    fn file_round_trip_both_formats() {
        let dir = tempfile::tempdir().unwrap();
        let g = dyadic_model();
        for (name, fmt) in [("m.bin", ModelFormat::Binary), ("m.json", ModelFormat::Json)] {
            let p = dir.path().join(name);
            save_gmm(&g, &p, fmt).unwrap();
            assert_eq!(load_gmm(&p).unwrap(), g);
        }
    }
}
