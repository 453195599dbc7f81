//! Raw byte storage shared between threads that partition it by protocol.
//!
//! Partitions, in-RAM disks and memory maps are written by several threads at
//! once, each touching a disjoint range. Those ranges are guaranteed by the
//! scheduler and delivery protocol, not by the type system, so access goes
//! through raw pointers here.

use std::alloc::{alloc_zeroed, dealloc, Layout};
use std::ptr::NonNull;

pub(crate) const ALIGN: usize = 4096;

/// A zero-initialised, page-aligned heap buffer.
pub(crate) struct RawBuf {
    ptr: NonNull<u8>,
    len: usize,
}

// SAFETY: RawBuf is a plain byte allocation; concurrent access is coordinated
// by callers of the unsafe accessors below.
unsafe impl Send for RawBuf {}
unsafe impl Sync for RawBuf {}

impl RawBuf {
    pub fn zeroed(len: usize) -> Self {
        if len == 0 {
            return RawBuf { ptr: NonNull::dangling(), len: 0 };
        }
        let layout = Layout::from_size_align(len, ALIGN).expect("buffer layout");
        // SAFETY: layout has non-zero size.
        let ptr = unsafe { alloc_zeroed(layout) };
        let ptr = NonNull::new(ptr).unwrap_or_else(|| std::alloc::handle_alloc_error(layout));
        RawBuf { ptr, len }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn as_ptr(&self) -> *mut u8 {
        self.ptr.as_ptr()
    }
}

impl Drop for RawBuf {
    fn drop(&mut self) {
        if self.len > 0 {
            let layout = Layout::from_size_align(self.len, ALIGN).expect("buffer layout");
            // SAFETY: allocated in `zeroed` with this layout.
            unsafe { dealloc(self.ptr.as_ptr(), layout) };
        }
    }
}

/// A `(pointer, length)` view of memory owned elsewhere.
#[derive(Clone, Copy)]
pub(crate) struct RawSpan {
    ptr: *mut u8,
    len: usize,
}

// SAFETY: see module docs; the span is only a handle.
unsafe impl Send for RawSpan {}
unsafe impl Sync for RawSpan {}

impl RawSpan {
    pub fn new(ptr: *mut u8, len: usize) -> Self {
        RawSpan { ptr, len }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn ptr(&self) -> *mut u8 {
        self.ptr
    }

    /// Copies `src` to `offset`.
    ///
    /// # Safety
    /// No other thread may access `[offset, offset + src.len())` concurrently.
    pub unsafe fn write(&self, offset: usize, src: &[u8]) {
        assert!(offset + src.len() <= self.len, "raw write out of range");
        std::ptr::copy_nonoverlapping(src.as_ptr(), self.ptr.add(offset), src.len());
    }

    /// Copies bytes at `offset` into `dst`.
    ///
    /// # Safety
    /// No other thread may write `[offset, offset + dst.len())` concurrently.
    pub unsafe fn read(&self, offset: usize, dst: &mut [u8]) {
        assert!(offset + dst.len() <= self.len, "raw read out of range");
        std::ptr::copy_nonoverlapping(self.ptr.add(offset), dst.as_mut_ptr(), dst.len());
    }

    /// # Safety
    /// The range must not be written by anyone else while the slice lives.
    pub unsafe fn slice<'a>(&self, offset: usize, len: usize) -> &'a [u8] {
        assert!(offset + len <= self.len, "raw slice out of range");
        std::slice::from_raw_parts(self.ptr.add(offset), len)
    }

    /// # Safety
    /// The range must not be accessed by anyone else while the slice lives.
    #[allow(clippy::mut_from_ref)]
    pub unsafe fn slice_mut<'a>(&self, offset: usize, len: usize) -> &'a mut [u8] {
        assert!(offset + len <= self.len, "raw slice out of range");
        std::slice::from_raw_parts_mut(self.ptr.add(offset), len)
    }
}
