//! Binary snapshot files.
//!
//! Layout, all little-endian:
//!
//! | offset | size | content |
//! |---|---|---|
//! | 0 | 4 | magic `MGF1` |
//! | 4 | 4 | byte order tag `LE\0\0` |
//! | 8 | 12 | `N₁ N₂ N₃` as `u32` |
//! | 20 | 24 | `ν`, `κ`, `t` as `f64` |
//! | 44 | … | `(re, im)` `f64` pairs over the half spectrum |
//!
//! The half spectrum is the set of storage indices `(i₁, i₂, i₃)` with
//! `0 ≤ i₃ ≤ N₃/2`, i.e. `k₃ ≥ 0` including the Nyquist plane, ordered with
//! `i₁` slowest and `i₃` fastest. The remaining coefficients are rebuilt by
//! Hermitian symmetry on load.

use std::path::Path;

use num_complex::Complex64;

use super::{IoError, Result};
use crate::spectral::{Lattice, SpectralField};

pub const MAGIC: [u8; 4] = *b"MGF1";
pub const BYTE_ORDER: [u8; 4] = *b"LE\0\0";
pub const HEADER_LEN: usize = 44;

/// Relative tolerance for the Hermitian check on self-conjugate planes.
const HERMITIAN_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotFile {
    pub t: f64,
    pub nu: f64,
    pub kappa: f64,
    pub theta: SpectralField,
}

fn half_len(dims: [usize; 3]) -> usize {
    dims[0] * dims[1] * (dims[2] / 2 + 1)
}

pub fn encode(snap: &SnapshotFile) -> Vec<u8> {
    let lattice = snap.theta.lattice();
    let dims = lattice.dims();
    let mut out = Vec::with_capacity(HEADER_LEN + 16 * half_len(dims));
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&BYTE_ORDER);
    for n in dims {
        out.extend_from_slice(&(n as u32).to_le_bytes());
    }
    for v in [snap.nu, snap.kappa, snap.t] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    let coeffs = snap.theta.coeffs();
    for i1 in 0..dims[0] {
        for i2 in 0..dims[1] {
            for i3 in 0..=dims[2] / 2 {
                let c = coeffs[(i1 * dims[1] + i2) * dims[2] + i3];
                out.extend_from_slice(&c.re.to_le_bytes());
                out.extend_from_slice(&c.im.to_le_bytes());
            }
        }
    }
    out
}

fn read_f64(bytes: &[u8], at: usize) -> f64 {
    f64::from_le_bytes(bytes[at..at + 8].try_into().expect("8-byte slice"))
}

pub fn decode(bytes: &[u8]) -> Result<SnapshotFile> {
    if bytes.len() < 4 || bytes[..4] != MAGIC {
        return Err(IoError::BadMagic);
    }
    if bytes.len() < HEADER_LEN {
        return Err(IoError::Truncated {
            expected: HEADER_LEN,
            found: bytes.len(),
        });
    }
    let tag: [u8; 4] = bytes[4..8].try_into().expect("4-byte slice");
    if tag != BYTE_ORDER {
        return Err(IoError::ByteOrder(tag));
    }
    let mut dims = [0usize; 3];
    for (a, d) in dims.iter_mut().enumerate() {
        let at = 8 + 4 * a;
        *d = u32::from_le_bytes(bytes[at..at + 4].try_into().expect("4-byte slice")) as usize;
    }
    let lattice = Lattice::new(dims).map_err(|e| IoError::Invariant(e.to_string()))?;
    let (nu, kappa, t) = (read_f64(bytes, 20), read_f64(bytes, 28), read_f64(bytes, 36));
    let expected = HEADER_LEN + 16 * half_len(dims);
    if bytes.len() < expected {
        return Err(IoError::Truncated {
            expected,
            found: bytes.len(),
        });
    }
    if bytes.len() > expected {
        return Err(IoError::TrailingBytes(bytes.len() - expected));
    }

    let mut coeffs = vec![Complex64::default(); lattice.len()];
    let mut at = HEADER_LEN;
    for i1 in 0..dims[0] {
        for i2 in 0..dims[1] {
            for i3 in 0..=dims[2] / 2 {
                let c = Complex64::new(read_f64(bytes, at), read_f64(bytes, at + 8));
                at += 16;
                if !c.re.is_finite() || !c.im.is_finite() {
                    return Err(IoError::Invariant("non-finite coefficient".into()));
                }
                coeffs[(i1 * dims[1] + i2) * dims[2] + i3] = c;
            }
        }
    }
    // rebuild k₃ < 0 from the conjugate modes
    for i1 in 0..dims[0] {
        for i2 in 0..dims[1] {
            for i3 in dims[2] / 2 + 1..dims[2] {
                let flat = (i1 * dims[1] + i2) * dims[2] + i3;
                coeffs[flat] = coeffs[lattice.conjugate_index(flat)].conj();
            }
        }
    }
    let theta = SpectralField::from_coeffs(lattice, coeffs).map_err(|e| IoError::Invariant(e.to_string()))?;
    let scale = theta.max_abs();
    if theta.hermitian_defect() > HERMITIAN_TOL * scale {
        return Err(IoError::Invariant(format!(
            "coefficients are not Hermitian (defect {:e})",
            theta.hermitian_defect()
        )));
    }
    if theta.gauge_violation() > 0.0 {
        return Err(IoError::Invariant(format!(
            "gauge violation: k3=0 plane carries {:e}",
            theta.gauge_violation()
        )));
    }
    if !(kappa > 0.0) || !(nu >= 0.0) || !t.is_finite() {
        return Err(IoError::Invariant(format!("bad header values ν = {nu}, κ = {kappa}, t = {t}")));
    }
    Ok(SnapshotFile { t, nu, kappa, theta })
}

pub fn write_snapshot(path: impl AsRef<Path>, snap: &SnapshotFile) -> Result<()> {
    std::fs::write(path, encode(snap))?;
    Ok(())
}

pub fn read_snapshot(path: impl AsRef<Path>) -> Result<SnapshotFile> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|source| IoError::Missing {
        path: path.to_path_buf(),
        source,
    })?;
    decode(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solver::random_initial_data;

    fn sample() -> SnapshotFile {
        let l = Lattice::new([8, 10, 12]).unwrap();
        SnapshotFile {
            t: 0.125,
            nu: 1e-3,
            kappa: 0.7,
            theta: random_initial_data(l, 5, 3, 1.3),
        }
    }

    #[test]
    fn round_trip_is_byte_exact() {
        let snap = sample();
        let bytes = encode(&snap);
        assert_eq!(bytes.len(), HEADER_LEN + 16 * 8 * 10 * 7);
        let back = decode(&bytes).unwrap();
        assert_eq!(back.t.to_bits(), snap.t.to_bits());
        assert_eq!(back.nu.to_bits(), snap.nu.to_bits());
        assert_eq!(back.kappa.to_bits(), snap.kappa.to_bits());
        assert_eq!(encode(&back), bytes);
    }

    #[test]
    fn rejects_corrupt_files() {
        let bytes = encode(&sample());
        assert!(matches!(decode(&bytes[..HEADER_LEN]), Err(IoError::Truncated { .. })));
        assert!(matches!(decode(&bytes[..20]), Err(IoError::Truncated { .. })));
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(decode(&bad), Err(IoError::BadMagic)));
        let mut bad = bytes.clone();
        bad[4] = b'B';
        assert!(matches!(decode(&bad), Err(IoError::ByteOrder(_))));
        let mut bad = bytes.clone();
        bad.push(0);
        assert!(matches!(decode(&bad), Err(IoError::TrailingBytes(1))));
    }

    #[test]
    fn rejects_non_hermitian_and_gauge_payloads() {
        let snap = sample();
        let mut bytes = encode(&snap);
        // first payload entry is k = 0 on the k₃ = 0 plane
        bytes[HEADER_LEN..HEADER_LEN + 8].copy_from_slice(&1.0f64.to_le_bytes());
        assert!(matches!(decode(&bytes), Err(IoError::Invariant(_))));

        // a Nyquist-plane entry without its conjugate partner
        let mut bytes = encode(&snap);
        let half = 12 / 2 + 1;
        let entry = (1 * 10 + 2) * half + 6; // (i₁, i₂, i₃) = (1, 2, N₃/2)
        let at = HEADER_LEN + 16 * entry + 8;
        bytes[at..at + 8].copy_from_slice(&0.5f64.to_le_bytes());
        let err = decode(&bytes).unwrap_err();
        assert!(err.to_string().contains("Hermitian"), "{err}");
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("theta.mgf");
        let snap = sample();
        write_snapshot(&path, &snap).unwrap();
        assert_eq!(read_snapshot(&path).unwrap(), snap);
        assert!(matches!(read_snapshot(dir.path().join("missing")), Err(IoError::Missing { .. })));
    }
}
