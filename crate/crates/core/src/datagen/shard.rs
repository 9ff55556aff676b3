//! Binary shard format for labeled phase maps.
//!
//! Little-endian. Header: magic `DOAP`, version u16, M u16, K u32, I u16,
//! record count u64. Each record: label bitmask u64, then M·K f32 phases,
//! mic-major.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Seek, SeekFrom, Write};
use std::path::Path;

use crate::datagen::{LabelSet, LabeledFrame, Manifest};
use crate::dsp::PhaseMap;
use crate::error::{Error, IoContext, Result};

pub const SHARD_MAGIC: [u8; 4] = *b"DOAP";
pub const SHARD_VERSION: u16 = 1;
const HEADER_LEN: u64 = 4 + 2 + 2 + 4 + 2 + 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ShardHeader {
    pub mics: u16,
    pub bands: u32,
    pub classes: u16,
    pub count: u64,
}

impl ShardHeader {
    fn record_len(&self) -> u64 {
        8 + 4 * self.mics as u64 * self.bands as u64
    }

    fn encode(&self) -> [u8; HEADER_LEN as usize] {
        let mut out = [0u8; HEADER_LEN as usize];
        out[0..4].copy_from_slice(&SHARD_MAGIC);
        out[4..6].copy_from_slice(&SHARD_VERSION.to_le_bytes());
        out[6..8].copy_from_slice(&self.mics.to_le_bytes());
        out[8..12].copy_from_slice(&self.bands.to_le_bytes());
        out[12..14].copy_from_slice(&self.classes.to_le_bytes());
        out[14..22].copy_from_slice(&self.count.to_le_bytes());
        out
    }

    fn decode(bytes: &[u8; HEADER_LEN as usize]) -> Result<Self> {
        let magic: [u8; 4] = bytes[0..4].try_into().unwrap();
        if magic != SHARD_MAGIC {
            return Err(Error::BadMagic {
                what: "shard",
                expected: SHARD_MAGIC,
                found: magic,
            });
        }
        let version = u16::from_le_bytes(bytes[4..6].try_into().unwrap());
        if version != SHARD_VERSION {
            return Err(Error::Version {
                what: "shard",
                expected: SHARD_VERSION,
                found: version,
            });
        }
        Ok(Self {
            mics: u16::from_le_bytes(bytes[6..8].try_into().unwrap()),
            bands: u32::from_le_bytes(bytes[8..12].try_into().unwrap()),
            classes: u16::from_le_bytes(bytes[12..14].try_into().unwrap()),
            count: u64::from_le_bytes(bytes[14..22].try_into().unwrap()),
        })
    }
}

/// Streams records into a shard; the count is patched on [`finish`](Self::finish).
pub struct ShardWriter {
    out: BufWriter<File>,
    header: ShardHeader,
    written: u64,
    buf: Vec<u8>,
}

impl ShardWriter {
    pub fn create(path: &Path, header: ShardHeader) -> Result<Self> {
        let file = File::create(path).context(|| format!("creating shard {}", path.display()))?;
        let mut out = BufWriter::with_capacity(1 << 20, file);
        let header = ShardHeader { count: 0, ..header };
        out.write_all(&header.encode()).context(|| "writing shard header".into())?;
        Ok(Self {
            out,
            header,
            written: 0,
            buf: Vec::new(),
        })
    }

    pub fn write(&mut self, record: &LabeledFrame) -> Result<()> {
        let h = &self.header;
        if record.phase.mics != h.mics as usize || record.phase.bands() != h.bands as usize {
            return Err(Error::Shape(format!(
                "record is {}x{}, shard expects {}x{}",
                record.phase.mics,
                record.phase.bands(),
                h.mics,
                h.bands
            )));
        }
        if record.label.classes().any(|c| c >= h.classes as usize) {
            return Err(Error::Shape(format!("label {:#x} has classes beyond {}", record.label.0, h.classes)));
        }
        self.buf.clear();
        self.buf.extend_from_slice(&record.label.0.to_le_bytes());
        for v in &record.phase.values {
            self.buf.extend_from_slice(&v.to_le_bytes());
        }
        self.out.write_all(&self.buf).context(|| "writing shard record".into())?;
        self.written += 1;
        Ok(())
    }

    /// Patches the record count and flushes. Returns the count.
    pub fn finish(mut self) -> Result<u64> {
        self.header.count = self.written;
        self.out.flush().context(|| "flushing shard".into())?;
        let mut file = self.out.into_inner().map_err(|e| Error::Io {
            context: "flushing shard".into(),
            source: e.into_error(),
        })?;
        file.seek(SeekFrom::Start(0)).context(|| "seeking shard header".into())?;
        file.write_all(&self.header.encode()).context(|| "patching shard header".into())?;
        file.sync_all().context(|| "syncing shard".into())?;
        Ok(self.written)
    }
}

pub fn write_shard(path: &Path, header: ShardHeader, records: &[LabeledFrame]) -> Result<u64> {
    let mut w = ShardWriter::create(path, header)?;
    for r in records {
        w.write(r)?;
    }
    w.finish()
}

fn open_checked(path: &Path) -> Result<(BufReader<File>, ShardHeader)> {
    let file = File::open(path).context(|| format!("opening shard {}", path.display()))?;
    let len = file.metadata().context(|| format!("stat {}", path.display()))?.len();
    if len < HEADER_LEN {
        return Err(Error::Truncated {
            what: "shard",
            detail: format!("{len} bytes is shorter than the {HEADER_LEN}-byte header"),
        });
    }
    let mut reader = BufReader::with_capacity(1 << 20, file);
    let mut raw = [0u8; HEADER_LEN as usize];
    reader.read_exact(&mut raw).context(|| "reading shard header".into())?;
    let header = ShardHeader::decode(&raw)?;
    let body = len - HEADER_LEN;
    let expected = header.count.checked_mul(header.record_len()).ok_or_else(|| Error::Truncated {
        what: "shard",
        detail: format!("declared count {} overflows", header.count),
    })?;
    if body < expected {
        return Err(Error::Truncated {
            what: "shard",
            detail: format!("{body} body bytes, {} records need {expected}", header.count),
        });
    }
    if body > expected {
        return Err(Error::CountMismatch {
            declared: header.count,
            found: body / header.record_len(),
        });
    }
    Ok((reader, header))
}

pub fn read_shard_header(path: &Path) -> Result<ShardHeader> {
    open_checked(path).map(|(_, h)| h)
}

fn read_record(reader: &mut impl Read, header: &ShardHeader, phases: &mut Vec<f32>, raw: &mut Vec<u8>) -> Result<u64> {
    raw.resize(header.record_len() as usize, 0);
    reader.read_exact(raw).context(|| "reading shard record".into())?;
    let label = u64::from_le_bytes(raw[..8].try_into().unwrap());
    phases.extend(raw[8..].chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())));
    Ok(label)
}

/// Reads a whole shard into memory.
pub fn read_shard(path: &Path) -> Result<(ShardHeader, Vec<LabeledFrame>)> {
    let (mut reader, header) = open_checked(path)?;
    let mut raw = Vec::new();
    let mut records = Vec::with_capacity(header.count as usize);
    for _ in 0..header.count {
        let mut values = Vec::with_capacity(header.mics as usize * header.bands as usize);
        let label = read_record(&mut reader, &header, &mut values, &mut raw)?;
        records.push(LabeledFrame {
            phase: PhaseMap {
                values,
                mics: header.mics as usize,
                band_lo: 0,
                band_hi: header.bands as usize - 1,
            },
            label: LabelSet(label),
        });
    }
    Ok((header, records))
}

/// Flat in-memory training set.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FrameStore {
    pub mics: usize,
    pub bands: usize,
    pub classes: usize,
    pub phases: Vec<f32>,
    pub labels: Vec<u64>,
}

impl FrameStore {
    pub fn new(mics: usize, bands: usize, classes: usize) -> Self {
        Self {
            mics,
            bands,
            classes,
            ..Default::default()
        }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn frame_len(&self) -> usize {
        self.mics * self.bands
    }

    pub fn input(&self, i: usize) -> &[f32] {
        let n = self.frame_len();
        &self.phases[i * n..(i + 1) * n]
    }

    pub fn push(&mut self, record: &LabeledFrame) -> Result<()> {
        if record.phase.mics != self.mics || record.phase.bands() != self.bands {
            return Err(Error::Shape(format!(
                "record is {}x{}, store holds {}x{}",
                record.phase.mics,
                record.phase.bands(),
                self.mics,
                self.bands
            )));
        }
        self.phases.extend_from_slice(&record.phase.values);
        self.labels.push(record.label.0);
        Ok(())
    }

    /// Appends every record of a shard, streaming.
    pub fn load_shard(&mut self, path: &Path) -> Result<()> {
        let (mut reader, header) = open_checked(path)?;
        if header.mics as usize != self.mics || header.bands as usize != self.bands || header.classes as usize != self.classes {
            return Err(Error::Shape(format!(
                "shard {} is M={} K={} I={}, expected M={} K={} I={}",
                path.display(),
                header.mics,
                header.bands,
                header.classes,
                self.mics,
                self.bands,
                self.classes
            )));
        }
        self.phases.reserve(header.count as usize * self.frame_len());
        self.labels.reserve(header.count as usize);
        let mut raw = Vec::new();
        for _ in 0..header.count {
            let label = read_record(&mut reader, &header, &mut self.phases, &mut raw)?;
            self.labels.push(label);
        }
        Ok(())
    }

    /// Loads every shard listed in `dir/manifest.json`.
    pub fn from_manifest(dir: &Path) -> Result<(Manifest, Self)> {
        let manifest = Manifest::load(&dir.join(Manifest::FILE_NAME))?;
        let mut store = Self::new(manifest.mics, manifest.bands, manifest.classes);
        for path in manifest.shard_paths(dir) {
            store.load_shard(&path)?;
        }
        Ok((manifest, store))
    }
}
