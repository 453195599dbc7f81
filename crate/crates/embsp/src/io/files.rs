use std::fs::{File, OpenOptions};
use std::io::Write;
use std::os::unix::fs::FileExt;
use std::os::unix::io::AsRawFd;
use std::path::Path;

use crate::error::{Error, Result};

const ZERO_CHUNK: usize = 1 << 20;

/// Creates (truncating) a backing file of exactly `len` bytes with its space reserved.
///
/// Falls back to writing zeros when the file system rejects `posix_fallocate`.
pub(crate) fn create_preallocated(path: &Path, len: u64) -> Result<File> {
    let file = OpenOptions::new()
        .read(true)
        .write(true)
        .create(true)
        .truncate(true)
        .open(path)
        .map_err(|e| Error::io(format!("creating {}", path.display()), e))?;
    if len > 0 {
        // SAFETY: valid descriptor; offsets are non-negative and fit in off_t.
        let rc = unsafe { libc::posix_fallocate(file.as_raw_fd(), 0, len as libc::off_t) };
        if rc != 0 {
            zero_fill(&file, len).map_err(|e| Error::io(format!("zero-filling {}", path.display()), e))?;
        }
    }
    file.set_len(len).map_err(|e| Error::io(format!("sizing {}", path.display()), e))?;
    Ok(file)
}

fn zero_fill(file: &File, len: u64) -> std::io::Result<()> {
    let zeros = vec![0u8; ZERO_CHUNK];
    let mut w = file;
    let mut left = len;
    while left > 0 {
        let n = left.min(ZERO_CHUNK as u64) as usize;
        w.write_all(&zeros[..n])?;
        left -= n as u64;
    }
    w.flush()
}

/// Positional I/O on a fixed set of files.
pub(crate) struct FileSet {
    files: Vec<Option<File>>,
}

impl FileSet {
    pub fn new(files: Vec<Option<File>>) -> Self {
        FileSet { files }
    }

    pub fn file(&self, disk: usize) -> &File {
        self.files[disk].as_ref().expect("disk has no backing file")
    }

    pub fn write_at(&self, disk: usize, offset: u64, data: &[u8]) -> std::io::Result<()> {
        self.file(disk).write_all_at(data, offset)
    }

    pub fn read_at(&self, disk: usize, offset: u64, buf: &mut [u8]) -> std::io::Result<()> {
        self.file(disk).read_exact_at(buf, offset)
    }
}
