//! CBT1 binary container.
//!
//! Layout: `b"CBT1"`, version byte `0x01`, rank byte, `rank × u32` LE
//! extents, then the `f32` LE row-major payload.

use super::{Result, Tensor, TensorError};
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

pub const CBT1_MAGIC: &[u8; 4] = b"CBT1";
pub const CBT1_VERSION: u8 = 0x01;

pub fn write_cbt1<W: Write>(mut w: W, t: &Tensor) -> Result<()> {
    let rank = u8::try_from(t.rank())
        .map_err(|_| TensorError::Format(format!("rank {} exceeds 255", t.rank())))?;
    w.write_all(CBT1_MAGIC)?;
    w.write_all(&[CBT1_VERSION, rank])?;
    for &n in t.shape() {
        let n = u32::try_from(n)
            .map_err(|_| TensorError::Format(format!("extent {n} exceeds u32")))?;
        w.write_all(&n.to_le_bytes())?;
    }
    let mut buf = Vec::with_capacity(t.len() * 4);
    for v in t.data() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

pub fn read_cbt1<R: Read>(mut r: R) -> Result<Tensor> {
    let mut head = [0u8; 6];
    r.read_exact(&mut head)
        .map_err(|_| TensorError::Format("truncated header".into()))?;
    if &head[..4] != CBT1_MAGIC {
        return Err(TensorError::Format("bad magic".into()));
    }
    if head[4] != CBT1_VERSION {
        return Err(TensorError::Format(format!("unsupported version {}", head[4])));
    }
    let rank = head[5] as usize;
    let mut shape = Vec::with_capacity(rank);
    for _ in 0..rank {
        let mut b = [0u8; 4];
        r.read_exact(&mut b)
            .map_err(|_| TensorError::Format("truncated extents".into()))?;
        shape.push(u32::from_le_bytes(b) as usize);
    }
    let n = shape
        .iter()
        .try_fold(1usize, |acc, &e| acc.checked_mul(e))
        .ok_or_else(|| TensorError::Format("element count overflows".into()))?;
    let mut payload = Vec::new();
    r.read_to_end(&mut payload)?;
    if payload.len() != n * 4 {
        return Err(TensorError::Format(format!(
            "payload has {} bytes, shape {shape:?} needs {}",
            payload.len(),
            n * 4
        )));
    }
    let data = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    Tensor::new(shape, data)
}

pub fn save_cbt1(path: impl AsRef<Path>, t: &Tensor) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_cbt1(&mut w, t)?;
    w.flush()?;
    Ok(())
}

pub fn load_cbt1(path: impl AsRef<Path>) -> Result<Tensor> {
    read_cbt1(BufReader::new(File::open(path)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn header_layout_is_exact() {
        let t = Tensor::new(vec![2, 1], vec![1.0, -2.5]).unwrap();
        let mut buf = Vec::new();
        write_cbt1(&mut buf, &t).unwrap();
        let mut expected = b"CBT1".to_vec();
        expected.extend_from_slice(&[1, 2, 2, 0, 0, 0, 1, 0, 0, 0]);
        expected.extend_from_slice(&1.0f32.to_le_bytes());
        expected.extend_from_slice(&(-2.5f32).to_le_bytes());
        assert_eq!(buf, expected);
    }

    #[test]
    fn rejects_corrupt_input() {
        assert!(read_cbt1(&b"CBT2\x01\x00"[..]).is_err());
        assert!(read_cbt1(&b"CBT1\x02\x00"[..]).is_err());
        assert!(read_cbt1(&b"CBT1\x01\x01\x02\x00\x00\x00\x00\x00"[..]).is_err());
        // rank-0 scalar with one element
        let mut buf = b"CBT1\x01\x00".to_vec();
        buf.extend_from_slice(&3.0f32.to_le_bytes());
        let t = read_cbt1(&buf[..]).unwrap();
        assert_eq!(t.data(), &[3.0]);
    }

    proptest! {
        #[test]
        fn round_trip_is_bit_exact(
            shape in proptest::collection::vec(1usize..5, 0..4),
            seed in any::<u32>(),
        ) {
            let n: usize = shape.iter().product();
            let data: Vec<f32> = (0..n)
                .map(|i| f32::from_bits(seed.wrapping_mul(2654435761).wrapping_add(i as u32 * 97)))
                .collect();
            let t = Tensor::new(shape, data).unwrap();
            let mut buf = Vec::new();
            write_cbt1(&mut buf, &t).unwrap();
            let back = read_cbt1(&buf[..]).unwrap();
            prop_assert_eq!(back.shape(), t.shape());
            let a: Vec<u32> = back.data().iter().map(|v| v.to_bits()).collect();
            let b: Vec<u32> = t.data().iter().map(|v| v.to_bits()).collect();
            prop_assert_eq!(a, b);
        }
    }
}
