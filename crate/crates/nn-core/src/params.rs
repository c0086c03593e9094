//! Named parameter stores: the visitor nets expose their weights through,
//! and the versioned binary checkpoint format built on top of it.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use crate::{NnError, NnResult};

const MAGIC: &[u8; 4] = b"NNCK";
const FORMAT_VERSION: u32 = 1;

/// Anything holding trainable parameters exposes them, name by name, in a
/// stable order. Gradient buffers always mirror parameter shapes.
pub trait Parameterized {
    fn for_each_param(&mut self, visitor: &mut ParamVisitor);
}

/// Callback wrapper so implementors stay object-safe and simple.
pub struct ParamVisitor<'a> {
    f: &'a mut dyn FnMut(&str, &[usize], &mut [f64], &mut [f64]),
}

impl<'a> ParamVisitor<'a> {
    pub fn new(f: &'a mut dyn FnMut(&str, &[usize], &mut [f64], &mut [f64])) -> Self {
        Self { f }
    }

    pub fn tensor(&mut self, name: &str, shape: &[usize], value: &mut [f64], grad: &mut [f64]) {
        debug_assert_eq!(value.len(), grad.len(), "grad buffer must mirror {name}");
        debug_assert_eq!(value.len(), shape.iter().product::<usize>());
        (self.f)(name, shape, value, grad);
    }
}

pub fn zero_grads<P: Parameterized>(net: &mut P) {
    let mut f = |_: &str, _: &[usize], _: &mut [f64], grad: &mut [f64]| {
        grad.iter_mut().for_each(|g| *g = 0.0);
    };
    net.for_each_param(&mut ParamVisitor::new(&mut f));
}

pub fn param_count<P: Parameterized>(net: &mut P) -> usize {
    let mut n = 0;
    let mut f = |_: &str, _: &[usize], value: &mut [f64], _: &mut [f64]| {
        n += value.len();
    };
    net.for_each_param(&mut ParamVisitor::new(&mut f));
    n
}

/// Add `other`'s gradient buffers into `net`'s (used for deterministic
/// chunked data-parallel accumulation).
pub fn accumulate_grads_from<P: Parameterized>(net: &mut P, source: &mut P) {
    let mut collected: Vec<(String, Vec<f64>)> = Vec::new();
    let mut f = |name: &str, _: &[usize], _: &mut [f64], grad: &mut [f64]| {
        collected.push((name.to_string(), grad.to_vec()));
    };
    source.for_each_param(&mut ParamVisitor::new(&mut f));
    let mut iter = collected.into_iter();
    let mut g = move |name: &str, _: &[usize], _: &mut [f64], grad: &mut [f64]| {
        let (src_name, src) = iter.next().expect("param structure mismatch");
        assert_eq!(src_name, name, "param order mismatch");
        crate::mat::axpy(grad, 1.0, &src);
    };
    net.for_each_param(&mut ParamVisitor::new(&mut g));
}

/// Named parameter arrays with shapes, plus free-form metadata. This is the
/// on-disk checkpoint unit shared by every trained module.
#[derive(Debug, Clone, Default)]
pub struct ParamStore {
    pub entries: Vec<ParamEntry>,
    pub meta: BTreeMap<String, String>,
}

#[derive(Debug, Clone)]
pub struct ParamEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl ParamStore {
    pub fn from_net<P: Parameterized>(net: &mut P) -> Self {
        let mut entries = Vec::new();
        let mut f = |name: &str, shape: &[usize], value: &mut [f64], _: &mut [f64]| {
            entries.push(ParamEntry {
                name: name.to_string(),
                shape: shape.to_vec(),
                data: value.to_vec(),
            });
        };
        net.for_each_param(&mut ParamVisitor::new(&mut f));
        Self {
            entries,
            meta: BTreeMap::new(),
        }
    }

    /// Copies stored values into the net; every net tensor must be present
    /// with a matching shape.
    pub fn load_into<P: Parameterized>(&self, net: &mut P) -> NnResult<()> {
        let by_name: BTreeMap<&str, &ParamEntry> = self
            .entries
            .iter()
            .map(|e| (e.name.as_str(), e))
            .collect();
        let mut err = None;
        let mut f = |name: &str, shape: &[usize], value: &mut [f64], _: &mut [f64]| {
            if err.is_some() {
                return;
            }
            match by_name.get(name) {
                None => err = Some(NnError::MissingTensor(name.to_string())),
                Some(e) if e.shape != shape => {
                    err = Some(NnError::ShapeMismatch {
                        name: name.to_string(),
                        expected: shape.to_vec(),
                        got: e.shape.clone(),
                    })
                }
                Some(e) => value.copy_from_slice(&e.data),
            }
        };
        net.for_each_param(&mut ParamVisitor::new(&mut f));
        match err {
            Some(e) => Err(e),
            None => Ok(()),
        }
    }

    pub fn save(&self, path: impl AsRef<Path>) -> NnResult<()> {
        let path = path.as_ref();
        let mut buf = Vec::new();
        buf.extend_from_slice(MAGIC);
        buf.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        let meta_json = meta_to_json(&self.meta);
        buf.extend_from_slice(&(meta_json.len() as u32).to_le_bytes());
        buf.extend_from_slice(meta_json.as_bytes());
        buf.extend_from_slice(&(self.entries.len() as u32).to_le_bytes());
        for e in &self.entries {
            buf.extend_from_slice(&(e.name.len() as u16).to_le_bytes());
            buf.extend_from_slice(e.name.as_bytes());
            buf.push(e.shape.len() as u8);
            for &d in &e.shape {
                buf.extend_from_slice(&(d as u64).to_le_bytes());
            }
            for &x in &e.data {
                buf.extend_from_slice(&x.to_le_bytes());
            }
        }
        std::fs::write(path, &buf).map_err(|source| NnError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> NnResult<Self> {
        let path = path.as_ref();
        let mut file = std::fs::File::open(path).map_err(|source| NnError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let mut buf = Vec::new();
        file.read_to_end(&mut buf).map_err(|source| NnError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let mut cur = Cursor::new(&buf, path.display().to_string());
        let magic = cur.take(4)?;
        if magic != MAGIC {
            return Err(cur.corrupt("bad magic"));
        }
        let version = u32::from_le_bytes(cur.take(4)?.try_into().unwrap());
        if version != FORMAT_VERSION {
            return Err(cur.corrupt(&format!("unsupported format version {version}")));
        }
        let meta_len = u32::from_le_bytes(cur.take(4)?.try_into().unwrap()) as usize;
        let meta_bytes = cur.take(meta_len)?;
        let meta = meta_from_json(std::str::from_utf8(meta_bytes).map_err(|_| cur.corrupt("meta not utf8"))?);
        let n = u32::from_le_bytes(cur.take(4)?.try_into().unwrap()) as usize;
        let mut entries = Vec::with_capacity(n);
        for _ in 0..n {
            let name_len = u16::from_le_bytes(cur.take(2)?.try_into().unwrap()) as usize;
            let name = std::str::from_utf8(cur.take(name_len)?)
                .map_err(|_| cur.corrupt("name not utf8"))?
                .to_string();
            let rank = cur.take(1)?[0] as usize;
            let mut shape = Vec::with_capacity(rank);
            for _ in 0..rank {
                shape.push(u64::from_le_bytes(cur.take(8)?.try_into().unwrap()) as usize);
            }
            let count: usize = shape.iter().product();
            let mut data = Vec::with_capacity(count);
            for _ in 0..count {
                data.push(f64::from_le_bytes(cur.take(8)?.try_into().unwrap()));
            }
            entries.push(ParamEntry { name, shape, data });
        }
        Ok(Self { entries, meta })
    }

    /// FNV-1a over the serialized content; used for checkpoint provenance
    /// chains across pipeline stages.
    pub fn content_hash(&self) -> u64 {
        let mut h = Fnv::new();
        for e in &self.entries {
            h.update(e.name.as_bytes());
            for &d in &e.shape {
                h.update(&(d as u64).to_le_bytes());
            }
            for &x in &e.data {
                h.update(&x.to_le_bytes());
            }
        }
        for (k, v) in &self.meta {
            h.update(k.as_bytes());
            h.update(v.as_bytes());
        }
        h.finish()
    }
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
    path: String,
}

impl<'a> Cursor<'a> {
    fn new(buf: &'a [u8], path: String) -> Self {
        Self { buf, pos: 0, path }
    }

    fn take(&mut self, n: usize) -> NnResult<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(NnError::Corrupt {
                path: self.path.clone(),
                msg: "unexpected end of file".into(),
            });
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn corrupt(&self, msg: &str) -> NnError {
        NnError::Corrupt {
            path: self.path.clone(),
            msg: msg.into(),
        }
    }
}

// Minimal flat string-map JSON so checkpoints stay dependency-free here.
fn meta_to_json(meta: &BTreeMap<String, String>) -> String {
    let mut s = String::from("{");
    for (i, (k, v)) in meta.iter().enumerate() {
        if i > 0 {
            s.push(',');
        }
        s.push_str(&format!("{:?}:{:?}", k, v));
    }
    s.push('}');
    s
}

fn meta_from_json(s: &str) -> BTreeMap<String, String> {
    let mut out = BTreeMap::new();
    let inner = s.trim().trim_start_matches('{').trim_end_matches('}');
    let mut chars = inner.chars().peekable();
    loop {
        match read_json_string(&mut chars) {
            Some(key) => {
                // skip ':'
                while let Some(&c) = chars.peek() {
                    chars.next();
                    if c == ':' {
                        break;
                    }
                }
                if let Some(value) = read_json_string(&mut chars) {
                    out.insert(key, value);
                }
                // skip ','
                while let Some(&c) = chars.peek() {
                    if c == ',' {
                        chars.next();
                        break;
                    } else if c.is_whitespace() {
                        chars.next();
                    } else {
                        break;
                    }
                }
            }
            None => break,
        }
    }
    out
}

fn read_json_string(chars: &mut std::iter::Peekable<std::str::Chars>) -> Option<String> {
    while let Some(&c) = chars.peek() {
        if c == '"' {
            break;
        }
        if c == '}' {
            return None;
        }
        chars.next();
    }
    chars.next()?; // opening quote
    let mut s = String::new();
    while let Some(c) = chars.next() {
        match c {
            '"' => return Some(s),
            '\\' => {
                if let Some(esc) = chars.next() {
                    match esc {
                        'n' => s.push('\n'),
                        't' => s.push('\t'),
                        other => s.push(other),
                    }
                }
            }
            other => s.push(other),
        }
    }
    None
}

/// Streaming FNV-1a (64-bit).
pub struct Fnv(u64);

impl Fnv {
    pub fn new() -> Self {
        Fnv(0xcbf29ce484222325)
    }

    pub fn update(&mut self, bytes: &[u8]) {
        for &b in bytes {
            self.0 ^= b as u64;
            self.0 = self.0.wrapping_mul(0x100000001b3);
        }
    }

    pub fn finish(&self) -> u64 {
        self.0
    }
}

impl Default for Fnv {
    fn default() -> Self {
        Self::new()
    }
}

pub fn fnv_hash(bytes: &[u8]) -> u64 {
    let mut h = Fnv::new();
    h.update(bytes);
    h.finish()
}

impl Write for Fnv {
    fn write(&mut self, buf: &[u8]) -> std::io::Result<usize> {
        self.update(buf);
        Ok(buf.len())
    }

    fn flush(&mut self) -> std::io::Result<()> {
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn store_round_trip() {
        let mut store = ParamStore::default();
        store.entries.push(ParamEntry {
            name: "layer.w".into(),
            shape: vec![2, 3],
            data: vec![1.0, -2.5, 3.0, 0.0, 1e-300, f64::MAX],
        });
        store.meta.insert("kind".into(), "test".into());
        store.meta.insert("upstream_hash".into(), "12345".into());
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("ck.bin");
        store.save(&p).unwrap();
        let back = ParamStore::load(&p).unwrap();
        assert_eq!(back.entries.len(), 1);
        assert_eq!(back.entries[0].name, "layer.w");
        assert_eq!(back.entries[0].shape, vec![2, 3]);
        assert_eq!(back.entries[0].data, store.entries[0].data);
        assert_eq!(back.meta.get("kind").unwrap(), "test");
        assert_eq!(back.content_hash(), store.content_hash());
    }

    #[test]
    fn meta_json_round_trip() {
        let mut m = BTreeMap::new();
        m.insert("a".to_string(), "hello world".to_string());
        m.insert("b".to_string(), "1234".to_string());
        let s = meta_to_json(&m);
        let back = meta_from_json(&s);
        assert_eq!(m, back);
    }
}
