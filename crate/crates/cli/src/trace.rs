//! Binary channel traces.
//!
//! Layout, all little-endian:
//!
//! ```text
//! header:  magic "XRTRACE\0" | version u32 | n_ues u32 | n_gnb_trx u32
//!          | n_ue_trx u32 | n_rb u32 | n_ttis u64
//!          | noise covariance, n_gnb_trx x n_gnb_trx complex, row-major
//! record:  tti u64 | for ue, for rb: n_gnb_trx x n_ue_trx complex, row-major
//! ```
//!
//! A complex entry is two `f64`, real part first.

use std::fs::File;
use std::io::{self, BufReader, Read, Write};
use std::path::Path;

use num_complex::Complex64;
use xrsched_core::channel::{CMatrix, ChannelRealization, ChannelSource};
use xrsched_core::engine::SimConfig;

use crate::output::write_atomic_with;

pub const MAGIC: [u8; 8] = *b"XRTRACE\0";
pub const VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum TraceError {
    #[error("trace I/O: {0}")]
    Io(#[from] io::Error),
    #[error("not a channel trace (bad magic)")]
    BadMagic,
    #[error("unsupported trace version {0}, expected {VERSION}")]
    Version(u32),
    #[error("trace dimension mismatch: {field} is {found} in the file but {expected} in the config")]
    Dimension {
        field: &'static str,
        found: u64,
        expected: u64,
    },
    #[error("trace truncated at byte offset {offset}: {what} needs {needed} bytes starting at byte {start}")]
    Truncated {
        offset: u64,
        start: u64,
        needed: u64,
        what: String,
    },
    #[error("realization has shape {got} but the trace header says {expected}")]
    Shape { expected: String, got: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceHeader {
    pub n_ues: usize,
    pub n_gnb_trx: usize,
    pub n_ue_trx: usize,
    pub n_rb: usize,
    pub n_ttis: u64,
    pub noise_cov: CMatrix,
}

impl TraceHeader {
    pub fn for_config(cfg: &SimConfig, n_ttis: u64) -> Self {
        Self {
            n_ues: cfg.n_ues,
            n_gnb_trx: cfg.channel.n_gnb_trx,
            n_ue_trx: cfg.channel.n_ue_trx,
            n_rb: cfg.channel.n_rb,
            n_ttis,
            noise_cov: cfg.channel.noise_covariance(),
        }
    }

    pub fn byte_len(&self) -> u64 {
        (8 + 4 * 5 + 8 + 16 * self.n_gnb_trx * self.n_gnb_trx) as u64
    }

    pub fn record_len(&self) -> u64 {
        (8 + 16 * self.n_ues * self.n_rb * self.n_gnb_trx * self.n_ue_trx) as u64
    }

    /// Checks every dimension against `cfg`.
    pub fn check(&self, cfg: &SimConfig) -> Result<(), TraceError> {
        let pairs = [
            ("n_ues", self.n_ues, cfg.n_ues),
            ("channel.n_gnb_trx", self.n_gnb_trx, cfg.channel.n_gnb_trx),
            ("channel.n_ue_trx", self.n_ue_trx, cfg.channel.n_ue_trx),
            ("channel.n_rb", self.n_rb, cfg.channel.n_rb),
        ];
        for (field, found, expected) in pairs {
            if found != expected {
                return Err(TraceError::Dimension {
                    field,
                    found: found as u64,
                    expected: expected as u64,
                });
            }
        }
        Ok(())
    }

    fn write_to<W: Write>(&self, w: &mut W) -> io::Result<()> {
        w.write_all(&MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        for d in [self.n_ues, self.n_gnb_trx, self.n_ue_trx, self.n_rb] {
            w.write_all(&(d as u32).to_le_bytes())?;
        }
        w.write_all(&self.n_ttis.to_le_bytes())?;
        write_matrix(w, &self.noise_cov)
    }
}

fn write_matrix<W: Write>(w: &mut W, m: &CMatrix) -> io::Result<()> {
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            let z = m[(i, j)];
            w.write_all(&z.re.to_le_bytes())?;
            w.write_all(&z.im.to_le_bytes())?;
        }
    }
    Ok(())
}

/// Streams `n_ttis` realizations from `source` into `w`.
pub fn export<W: Write, S: ChannelSource + ?Sized>(
    w: &mut W,
    header: &TraceHeader,
    source: &mut S,
) -> Result<(), TraceError> {
    header.write_to(w)?;
    for _ in 0..header.n_ttis {
        let real = source
            .next_realization()
            .map_err(|e| io::Error::other(e.to_string()))?;
        let got = (real.n_ues, real.n_rb, real.n_gnb_trx(), real.n_ue_trx());
        let expected = (header.n_ues, header.n_rb, header.n_gnb_trx, header.n_ue_trx);
        if got != expected {
            return Err(TraceError::Shape {
                expected: format!("{expected:?}"),
                got: format!("{got:?}"),
            });
        }
        w.write_all(&real.tti.to_le_bytes())?;
        for block in &real.h {
            write_matrix(w, block)?;
        }
    }
    Ok(())
}

/// Writes the channel of `drop` under `cfg` to `path` atomically.
pub fn export_drop(path: &Path, cfg: &SimConfig, drop: u32, n_ttis: u64) -> Result<(), TraceError> {
    let header = TraceHeader::for_config(cfg, n_ttis);
    let mut source = xrsched_core::engine::drop_channel(cfg, drop);
    write_atomic_with(path, |w| export(w, &header, &mut source))
}

/// Replays a trace as a [`ChannelSource`].
pub struct TraceReader<R> {
    reader: R,
    header: TraceHeader,
    offset: u64,
    served: u64,
}

impl TraceReader<BufReader<File>> {
    /// Opens `path`, checks its dimensions against `cfg` and its length
    /// against the header.
    pub fn open(path: &Path, cfg: &SimConfig) -> Result<Self, TraceError> {
        let file = File::open(path)?;
        let len = file.metadata()?.len();
        let reader = TraceReader::new(BufReader::new(file))?;
        reader.header.check(cfg)?;
        let body = len.saturating_sub(reader.header.byte_len());
        let rec = reader.header.record_len();
        let complete = body / rec;
        if complete < reader.header.n_ttis {
            return Err(TraceError::Truncated {
                offset: len,
                start: reader.header.byte_len() + complete * rec,
                needed: rec,
                what: format!("record {complete}"),
            });
        }
        Ok(reader)
    }
}

impl<R: Read> TraceReader<R> {
    /// Reads and validates the header.
    pub fn new(mut reader: R) -> Result<Self, TraceError> {
        let mut offset = 0;
        let mut magic = [0u8; 8];
        read_exact_at(&mut reader, &mut magic, &mut offset, "header")?;
        if magic != MAGIC {
            return Err(TraceError::BadMagic);
        }
        let version = read_u32(&mut reader, &mut offset)?;
        if version != VERSION {
            return Err(TraceError::Version(version));
        }
        let mut dims = [0usize; 4];
        for d in &mut dims {
            *d = read_u32(&mut reader, &mut offset)? as usize;
        }
        let n_ttis = read_u64(&mut reader, &mut offset, "header")?;
        let [n_ues, n_gnb_trx, n_ue_trx, n_rb] = dims;
        let noise_cov = read_matrix(&mut reader, &mut offset, n_gnb_trx, n_gnb_trx, "noise covariance")?;
        Ok(Self {
            reader,
            header: TraceHeader {
                n_ues,
                n_gnb_trx,
                n_ue_trx,
                n_rb,
                n_ttis,
                noise_cov,
            },
            offset,
            served: 0,
        })
    }

    pub fn header(&self) -> &TraceHeader {
        &self.header
    }

    /// Next realization, or `None` once every recorded TTI was served.
    pub fn read_next(&mut self) -> Result<Option<ChannelRealization>, TraceError> {
        if self.served == self.header.n_ttis {
            return Ok(None);
        }
        let h = &self.header;
        let start = self.offset;
        let what = format!("record {}", self.served);
        let tti = read_u64(&mut self.reader, &mut self.offset, &what).map_err(|e| at_record(e, start, h))?;
        let mut blocks = Vec::with_capacity(h.n_ues * h.n_rb);
        for _ in 0..h.n_ues * h.n_rb {
            let m = read_matrix(&mut self.reader, &mut self.offset, h.n_gnb_trx, h.n_ue_trx, &what)
                .map_err(|e| at_record(e, start, h))?;
            blocks.push(m);
        }
        self.served += 1;
        Ok(Some(ChannelRealization {
            tti,
            n_ues: h.n_ues,
            n_rb: h.n_rb,
            h: blocks,
            noise_cov: h.noise_cov.clone(),
        }))
    }
}

/// Reports a short read against the whole record it interrupted.
fn at_record(e: TraceError, start: u64, h: &TraceHeader) -> TraceError {
    match e {
        TraceError::Truncated { offset, what, .. } => TraceError::Truncated {
            offset,
            start,
            needed: h.record_len(),
            what,
        },
        other => other,
    }
}

impl<R: Read> ChannelSource for TraceReader<R> {
    fn next_realization(&mut self) -> xrsched_core::Result<ChannelRealization> {
        match self.read_next() {
            Ok(Some(real)) => Ok(real),
            Ok(None) => Err(xrsched_core::Error::ChannelExhausted(self.served)),
            Err(e) => Err(xrsched_core::Error::Domain(e.to_string())),
        }
    }
}

fn read_exact_at<R: Read>(r: &mut R, buf: &mut [u8], offset: &mut u64, what: &str) -> Result<(), TraceError> {
    let start = *offset;
    let mut filled = 0;
    while filled < buf.len() {
        match r.read(&mut buf[filled..]) {
            Ok(0) => {
                return Err(TraceError::Truncated {
                    offset: start + filled as u64,
                    start,
                    needed: buf.len() as u64,
                    what: what.to_string(),
                })
            }
            Ok(n) => filled += n,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e.into()),
        }
    }
    *offset += buf.len() as u64;
    Ok(())
}

fn read_u32<R: Read>(r: &mut R, offset: &mut u64) -> Result<u32, TraceError> {
    let mut b = [0u8; 4];
    read_exact_at(r, &mut b, offset, "header")?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64<R: Read>(r: &mut R, offset: &mut u64, what: &str) -> Result<u64, TraceError> {
    let mut b = [0u8; 8];
    read_exact_at(r, &mut b, offset, what)?;
    Ok(u64::from_le_bytes(b))
}

fn read_matrix<R: Read>(
    r: &mut R,
    offset: &mut u64,
    rows: usize,
    cols: usize,
    what: &str,
) -> Result<CMatrix, TraceError> {
    let mut buf = vec![0u8; 16 * rows * cols];
    read_exact_at(r, &mut buf, offset, what)?;
    let f = |k: usize| f64::from_le_bytes(buf[8 * k..8 * k + 8].try_into().unwrap());
    Ok(CMatrix::from_fn(rows, cols, |i, j| {
        let k = 2 * (i * cols + j);
        Complex64::new(f(k), f(k + 1))
    }))
}
