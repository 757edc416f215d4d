//! "DNET" parameter blobs: a shape manifest followed by the flat values.
//!
//! Layout (little-endian): magic `DNET`, u32 tensor count, then per tensor
//! u32 name length, UTF-8 name, u32 rank, u32 dims…; after the manifest every
//! tensor's f64 values in manifest order.

use super::{NumError, ParamStore, Tensor};

const MAGIC: &[u8; 4] = b"DNET";

impl ParamStore {
    pub fn to_dnet(&self) -> Vec<u8> {
        let mut out = MAGIC.to_vec();
        out.extend((self.len() as u32).to_le_bytes());
        for (name, t) in self.iter() {
            out.extend((name.len() as u32).to_le_bytes());
            out.extend(name.as_bytes());
            out.extend((t.rank() as u32).to_le_bytes());
            for &d in t.shape() {
                out.extend((d as u32).to_le_bytes());
            }
        }
        for (_, t) in self.iter() {
            for v in t.data() {
                out.extend(v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_dnet(bytes: &[u8]) -> Result<Self, NumError> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(NumError::State("blob does not start with DNET".into()));
        }
        let count = r.u32()? as usize;
        let mut manifest = Vec::with_capacity(count.min(1 << 16));
        for _ in 0..count {
            let len = r.u32()? as usize;
            let name = std::str::from_utf8(r.take(len)?)
                .map_err(|_| NumError::State("tensor name is not UTF-8".into()))?
                .to_string();
            let rank = r.u32()? as usize;
            let shape = (0..rank).map(|_| r.u32().map(|d| d as usize)).collect::<Result<Vec<_>, _>>()?;
            manifest.push((name, shape));
        }
        let mut store = ParamStore::new();
        for (name, shape) in manifest {
            let n: usize = shape.iter().product();
            let data = r
                .take(n * 8)?
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect();
            store.add(name, Tensor::new(shape, data)?);
        }
        if r.pos != bytes.len() {
            return Err(NumError::State(format!("{} trailing bytes in DNET blob", bytes.len() - r.pos)));
        }
        Ok(store)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], NumError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| NumError::State(format!("DNET blob truncated at byte {}", self.pos)))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, NumError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_and_truncation() {
        let mut s = ParamStore::new();
        s.add("a.weight", Tensor::matrix(2, 3, vec![1.0, -2.0, 0.5, 1e-300, 3.0, 7.25]).unwrap());
        s.add("a.bias", Tensor::vector(vec![0.1, 0.2, 0.3]).unwrap());
        let bytes = s.to_dnet();
        let back = ParamStore::from_dnet(&bytes).unwrap();
        assert_eq!(back.to_dnet(), bytes);
        assert_eq!(back.iter().map(|(n, _)| n.to_string()).collect::<Vec<_>>(), vec!["a.weight", "a.bias"]);
        assert!(ParamStore::from_dnet(&bytes[..bytes.len() - 1]).is_err());
        assert!(ParamStore::from_dnet(b"XNET\0\0\0\0").is_err());
    }
}
