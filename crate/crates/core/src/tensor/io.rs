//! The `T2NP` tensor container: magic bytes, format version, then named
//! entries of raw little-endian f32 data. Round-trips must be bit-exact, so
//! nothing here ever reformats or rescales values.

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;

pub const T2NP_MAGIC: &[u8; 4] = b"T2NP";
pub const T2NP_VERSION: u16 = 1;

/// (name, dims, values) triple as stored in a container.
pub type T2npEntry = (String, Vec<usize>, Vec<f32>);

fn format_err(msg: impl Into<String>) -> io::Error {
    io::Error::new(io::ErrorKind::InvalidData, msg.into())
}

pub fn write_t2np<W: Write>(w: &mut W, entries: &[(&str, &[usize], &[f32])]) -> io::Result<()> {
    w.write_all(T2NP_MAGIC)?;
    w.write_all(&T2NP_VERSION.to_le_bytes())?;
    let count = u32::try_from(entries.len()).map_err(|_| format_err("too many entries"))?;
    w.write_all(&count.to_le_bytes())?;
    for (name, dims, values) in entries {
        let name_bytes = name.as_bytes();
        let name_len =
            u16::try_from(name_bytes.len()).map_err(|_| format_err("entry name too long"))?;
        w.write_all(&name_len.to_le_bytes())?;
        w.write_all(name_bytes)?;
        let rank = u8::try_from(dims.len()).map_err(|_| format_err("rank too large"))?;
        w.write_all(&[rank])?;
        let mut numel = 1usize;
        for &d in *dims {
            let d32 = u32::try_from(d).map_err(|_| format_err("dimension too large"))?;
            w.write_all(&d32.to_le_bytes())?;
            numel *= d;
        }
        if numel != values.len() {
            return Err(format_err(format!(
                "entry '{name}': {} values for dims {dims:?}",
                values.len()
            )));
        }
        for v in *values {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn read_t2np<R: Read>(r: &mut R) -> io::Result<Vec<T2npEntry>> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != T2NP_MAGIC {
        return Err(format_err("bad magic bytes"));
    }
    let mut b2 = [0u8; 2];
    r.read_exact(&mut b2)?;
    let version = u16::from_le_bytes(b2);
    if version != T2NP_VERSION {
        return Err(format_err(format!("unsupported container version {version}")));
    }
    let mut b4 = [0u8; 4];
    r.read_exact(&mut b4)?;
    let count = u32::from_le_bytes(b4) as usize;
    let mut entries = Vec::with_capacity(count);
    for _ in 0..count {
        r.read_exact(&mut b2)?;
        let name_len = u16::from_le_bytes(b2) as usize;
        let mut name_bytes = vec![0u8; name_len];
        r.read_exact(&mut name_bytes)?;
        let name = String::from_utf8(name_bytes)
            .map_err(|_| format_err("entry name is not valid UTF-8"))?;
        let mut rank = [0u8; 1];
        r.read_exact(&mut rank)?;
        let mut dims = Vec::with_capacity(rank[0] as usize);
        let mut numel = 1usize;
        for _ in 0..rank[0] {
            r.read_exact(&mut b4)?;
            let d = u32::from_le_bytes(b4) as usize;
            dims.push(d);
            numel = numel
                .checked_mul(d)
                .ok_or_else(|| format_err("dimension overflow"))?;
        }
        let mut values = vec![0f32; numel];
        for v in values.iter_mut() {
            r.read_exact(&mut b4)?;
            *v = f32::from_le_bytes(b4);
        }
        entries.push((name, dims, values));
    }
    Ok(entries)
}

pub fn write_t2np_file(path: &Path, entries: &[(&str, &[usize], &[f32])]) -> io::Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_t2np(&mut w, entries)?;
    w.flush()
}

pub fn read_t2np_file(path: &Path) -> io::Result<Vec<T2npEntry>> {
    let mut r = BufReader::new(File::open(path)?);
    read_t2np(&mut r)
}
