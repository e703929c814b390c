use std::fs::{File, OpenOptions};
use std::io::{self, Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use crate::hardening::Envelope;

/// One replica's stable storage: an append-only log of sealed records and
/// at most one sealed checkpoint. Optionally mirrored to files in the
/// envelope byte format.
#[derive(Debug, Default)]
pub struct StorageLog {
    records: Vec<Envelope>,
    checkpoint: Option<Envelope>,
    files: Option<FileBacking>,
}

#[derive(Debug)]
struct FileBacking {
    dir: PathBuf,
    log: File,
    offsets: Vec<u64>,
}

impl StorageLog {
    pub fn in_memory() -> Self {
        Self::default()
    }

    /// Creates `dir` and writes `log.bin` / `checkpoint.bin` there. Reads are
    /// served from the files.
    pub fn file_backed(dir: &Path) -> io::Result<Self> {
        std::fs::create_dir_all(dir)?;
        let log = OpenOptions::new()
            .create(true)
            .truncate(true)
            .read(true)
            .write(true)
            .open(dir.join("log.bin"))?;
        Ok(StorageLog {
            records: Vec::new(),
            checkpoint: None,
            files: Some(FileBacking {
                dir: dir.to_path_buf(),
                log,
                offsets: Vec::new(),
            }),
        })
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn append(&mut self, env: Envelope) -> io::Result<u64> {
        if let Some(f) = &mut self.files {
            let off = f.log.seek(SeekFrom::End(0))?;
            f.log.write_all(&env.to_bytes())?;
            f.offsets.push(off);
        }
        self.records.push(env);
        Ok(self.records.len() as u64 - 1)
    }

    pub fn read(&mut self, index: u64) -> io::Result<Option<Envelope>> {
        let i = index as usize;
        if i >= self.records.len() {
            return Ok(None);
        }
        if let Some(f) = &mut self.files {
            let start = f.offsets[i];
            let end = match f.offsets.get(i + 1) {
                Some(&e) => e,
                None => f.log.seek(SeekFrom::End(0))?,
            };
            let mut buf = vec![0u8; (end - start) as usize];
            f.log.seek(SeekFrom::Start(start))?;
            f.log.read_exact(&mut buf)?;
            return Ok(Envelope::from_bytes(&buf).map(|(e, _)| e));
        }
        Ok(Some(self.records[i].clone()))
    }

    pub fn save_checkpoint(&mut self, env: Envelope) -> io::Result<()> {
        if let Some(f) = &self.files {
            std::fs::write(f.dir.join("checkpoint.bin"), env.to_bytes())?;
        }
        self.checkpoint = Some(env);
        Ok(())
    }

    pub fn load_checkpoint(&mut self) -> io::Result<Option<Envelope>> {
        if let Some(f) = &self.files {
            let path = f.dir.join("checkpoint.bin");
            if !path.exists() {
                return Ok(None);
            }
            let bytes = std::fs::read(path)?;
            return Ok(Envelope::from_bytes(&bytes).map(|(e, _)| e));
        }
        Ok(self.checkpoint.clone())
    }

    /// Flips a byte of a stored record in place.
    pub fn corrupt_record(&mut self, index: u64, offset: usize) {
        if let Some(e) = self.records.get_mut(index as usize) {
            if let Some(b) = e.payload.get_mut(offset) {
                *b ^= 0xff;
            }
        }
    }
}
