//! Flat binary and CSV dumps of generated datasets.
//!
//! Binary layout, little-endian: magic `GDDS`, `u32` version, `u32` type
//! tag, `u32` rank, `rank` x `u64` per-row dims, `u64` row count, then
//! `count * prod(dims)` `f64` values row-major.

use std::io::{Read, Write};
use std::path::Path;

use super::lines::{LineImage, TupleSample};
use super::parity::ParitySample;
use super::pwl::PwlCurve;
use super::stocks::StockSample;
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"GDDS";
const VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u32)]
pub enum DatasetTag {
    Parity = 1,
    LineImage = 2,
    Tuple = 3,
    Pwl = 4,
    Step = 5,
    Stock = 6,
}

impl DatasetTag {
    fn from_u32(v: u32) -> Result<Self> {
        Ok(match v {
            1 => Self::Parity,
            2 => Self::LineImage,
            3 => Self::Tuple,
            4 => Self::Pwl,
            5 => Self::Step,
            6 => Self::Stock,
            _ => return Err(Error::Malformed(format!("unknown dataset tag {v}"))),
        })
    }
}

/// Samples that flatten to one fixed-width numeric row.
pub trait Flatten {
    const TAG: DatasetTag;
    fn dims(&self) -> Vec<usize>;
    fn columns(&self) -> Vec<String>;
    fn write_row(&self, out: &mut Vec<f64>);
}

impl Flatten for ParitySample {
    const TAG: DatasetTag = DatasetTag::Parity;
    fn dims(&self) -> Vec<usize> {
        vec![self.x.len() + 1]
    }
    fn columns(&self) -> Vec<String> {
        let mut c: Vec<String> = (0..self.x.len()).map(|i| format!("x{i}")).collect();
        c.push("y".into());
        c
    }
    fn write_row(&self, out: &mut Vec<f64>) {
        out.extend(self.x.iter().map(|&b| b as f64));
        out.push(self.y as f64);
    }
}

impl Flatten for LineImage {
    const TAG: DatasetTag = DatasetTag::LineImage;
    fn dims(&self) -> Vec<usize> {
        vec![self.size * self.size + 1]
    }
    fn columns(&self) -> Vec<String> {
        let mut c: Vec<String> = (0..self.size * self.size)
            .map(|i| format!("px{i}"))
            .collect();
        c.push("y".into());
        c
    }
    fn write_row(&self, out: &mut Vec<f64>) {
        out.extend(self.pixels.iter().map(|&b| b as f64));
        out.push(self.y as f64);
    }
}

impl Flatten for TupleSample {
    const TAG: DatasetTag = DatasetTag::Tuple;
    fn dims(&self) -> Vec<usize> {
        let s = self.images[0].size;
        vec![self.images.len() * (s * s + 1) + 1]
    }
    fn columns(&self) -> Vec<String> {
        let mut c = Vec::new();
        for (j, im) in self.images.iter().enumerate() {
            c.extend((0..im.size * im.size).map(|i| format!("img{j}_px{i}")));
            c.push(format!("y{j}"));
        }
        c.push("y_tilde".into());
        c
    }
    fn write_row(&self, out: &mut Vec<f64>) {
        for im in &self.images {
            im.write_row(out);
        }
        out.push(self.y_tilde as f64);
    }
}

impl Flatten for PwlCurve {
    const TAG: DatasetTag = DatasetTag::Pwl;
    fn dims(&self) -> Vec<usize> {
        vec![2, self.n]
    }
    fn columns(&self) -> Vec<String> {
        (0..self.n)
            .map(|i| format!("f{i}"))
            .chain((0..self.n).map(|i| format!("p{i}")))
            .collect()
    }
    fn write_row(&self, out: &mut Vec<f64>) {
        out.extend_from_slice(&self.f);
        out.extend_from_slice(&self.p);
    }
}

/// Step-task pair `(x, y)`.
impl Flatten for (Vec<f64>, f64) {
    const TAG: DatasetTag = DatasetTag::Step;
    fn dims(&self) -> Vec<usize> {
        vec![self.0.len() + 1]
    }
    fn columns(&self) -> Vec<String> {
        let mut c: Vec<String> = (0..self.0.len()).map(|i| format!("x{i}")).collect();
        c.push("y".into());
        c
    }
    fn write_row(&self, out: &mut Vec<f64>) {
        out.extend_from_slice(&self.0);
        out.push(self.1);
    }
}

impl Flatten for StockSample {
    const TAG: DatasetTag = DatasetTag::Stock;
    fn dims(&self) -> Vec<usize> {
        vec![self.x.len() + self.z.len() + 1]
    }
    fn columns(&self) -> Vec<String> {
        (0..self.x.len())
            .map(|i| format!("x{i}"))
            .chain((0..self.z.len()).map(|i| format!("z{i}")))
            .chain(std::iter::once("y".to_string()))
            .collect()
    }
    fn write_row(&self, out: &mut Vec<f64>) {
        out.extend_from_slice(&self.x);
        out.extend_from_slice(&self.z);
        out.push(self.y as f64);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub tag: DatasetTag,
    pub dims: Vec<usize>,
    pub count: usize,
    pub columns: Vec<String>,
    pub values: Vec<f64>,
}

impl Dataset {
    pub fn from_samples<T: Flatten>(samples: &[T]) -> Result<Self> {
        let Some(first) = samples.first() else {
            return Err(Error::invalid("cannot dump an empty dataset"));
        };
        let dims = first.dims();
        let width: usize = dims.iter().product();
        let mut values = Vec::with_capacity(width * samples.len());
        for s in samples {
            if s.dims() != dims {
                return Err(Error::shape("samples have differing shapes"));
            }
            s.write_row(&mut values);
        }
        Ok(Self {
            tag: T::TAG,
            dims,
            count: samples.len(),
            columns: first.columns(),
            values,
        })
    }

    pub fn row_len(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let w = self.row_len();
        &self.values[i * w..(i + 1) * w]
    }

    pub fn write_binary<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        w.write_all(&(self.tag as u32).to_le_bytes())?;
        w.write_all(&(self.dims.len() as u32).to_le_bytes())?;
        for &d in &self.dims {
            w.write_all(&(d as u64).to_le_bytes())?;
        }
        w.write_all(&(self.count as u64).to_le_bytes())?;
        for v in &self.values {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    /// Column names are not stored in the binary form; they come back as
    /// `c0, c1, ...`.
    pub fn read_binary<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Malformed("bad dataset magic".into()));
        }
        let version = read_u32(&mut r)?;
        if version != VERSION {
            return Err(Error::Malformed(format!("unsupported version {version}")));
        }
        let tag = DatasetTag::from_u32(read_u32(&mut r)?)?;
        let rank = read_u32(&mut r)? as usize;
        if rank == 0 || rank > 8 {
            return Err(Error::Malformed(format!("bad rank {rank}")));
        }
        let dims = (0..rank)
            .map(|_| read_u64(&mut r).map(|v| v as usize))
            .collect::<Result<Vec<_>>>()?;
        let count = read_u64(&mut r)? as usize;
        let width: usize = dims.iter().product();
        let total = width
            .checked_mul(count)
            .ok_or_else(|| Error::Malformed("dataset size overflows".into()))?;
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes)?;
        if bytes.len() != total * 8 {
            return Err(Error::Malformed(format!(
                "expected {} value bytes, found {}",
                total * 8,
                bytes.len()
            )));
        }
        let values = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
            .collect();
        Ok(Self {
            tag,
            dims,
            count,
            columns: (0..width).map(|i| format!("c{i}")).collect(),
            values,
        })
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(&self.columns)?;
        for i in 0..self.count {
            out.write_record(self.row(i).iter().map(|v| v.to_string()))?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn save(&self, dir: &Path, stem: &str) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        let bin = std::fs::File::create(dir.join(format!("{stem}.bin")))?;
        self.write_binary(std::io::BufWriter::new(bin))?;
        let csv = std::fs::File::create(dir.join(format!("{stem}.csv")))?;
        self.write_csv(std::io::BufWriter::new(csv))
    }
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::{gen_parity, gen_pwl};

    #[test]
    fn binary_round_trip() {
        let samples = gen_parity(5, &[1, 0, 1, 0, 1], 20, 3).unwrap();
        let ds = Dataset::from_samples(&samples).unwrap();
        let mut buf = Vec::new();
        ds.write_binary(&mut buf).unwrap();
        let back = Dataset::read_binary(buf.as_slice()).unwrap();
        assert_eq!(back.values, ds.values);
        assert_eq!(
            (back.tag, back.count, &back.dims),
            (DatasetTag::Parity, 20, &vec![6])
        );
        assert!(Dataset::read_binary(&buf[..buf.len() - 3]).is_err());
        assert!(Dataset::read_binary(&b"XXXX"[..]).is_err());
    }

    #[test]
    fn csv_has_header_and_rows() {
        let curves: Vec<_> = (0..3).map(|s| gen_pwl(6, 2, s).unwrap()).collect();
        let ds = Dataset::from_samples(&curves).unwrap();
        let mut buf = Vec::new();
        ds.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 4);
        assert!(lines[0].starts_with("f0,f1"));
        assert_eq!(lines[1].split(',').count(), 12);
    }
}
