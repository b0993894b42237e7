//! Shared helpers: index ranges, file discovery, fixed-chunk parallelism.

use std::path::{Path, PathBuf};

use crate::CmdError;

/// Half-open index range, parsed from `"A..B"`.
#[derive(Clone, Copy, Debug)]
pub struct IndexRange {
    pub start: u64,
    pub end: u64,
}

impl IndexRange {
    pub fn parse(s: &str) -> Result<Self, CmdError> {
        let (a, b) = s
            .split_once("..")
            .ok_or_else(|| CmdError::Validation(format!("range `{s}` is not of the form A..B")))?;
        let start = a
            .parse()
            .map_err(|_| CmdError::Validation(format!("bad range start `{a}`")))?;
        let end = b
            .parse()
            .map_err(|_| CmdError::Validation(format!("bad range end `{b}`")))?;
        if end < start {
            return Err(CmdError::Validation(format!("range `{s}` is reversed")));
        }
        Ok(Self { start, end })
    }

    pub fn contains(&self, idx: u64) -> bool {
        (self.start..self.end).contains(&idx)
    }

    pub fn iter(&self) -> std::ops::Range<u64> {
        self.start..self.end
    }
}

/// Trailing digit run of a file stem, e.g. `deg_heavy_0042.pgm` -> 42.
pub fn file_index(path: &Path) -> Option<u64> {
    let stem = path.file_stem()?.to_str()?;
    let digits: String = stem
        .chars()
        .rev()
        .take_while(|c| c.is_ascii_digit())
        .collect::<Vec<_>>()
        .into_iter()
        .rev()
        .collect();
    if digits.is_empty() {
        None
    } else {
        digits.parse().ok()
    }
}

/// All files in `dir` with the given extension and an index suffix,
/// optionally filtered by filename prefix, sorted by index.
pub fn indexed_files(
    dir: &Path,
    extension: &str,
    prefix: Option<&str>,
) -> Result<Vec<(u64, PathBuf)>, CmdError> {
    let entries = std::fs::read_dir(dir)
        .map_err(|e| CmdError::Validation(format!("cannot read {}: {e}", dir.display())))?;
    let mut files = Vec::new();
    for entry in entries {
        let path = entry
            .map_err(|e| CmdError::Validation(format!("cannot list {}: {e}", dir.display())))?
            .path();
        if path.extension().and_then(|e| e.to_str()) != Some(extension) {
            continue;
        }
        if let Some(prefix) = prefix {
            let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("");
            if !name.starts_with(prefix) {
                continue;
            }
        }
        if let Some(idx) = file_index(&path) {
            files.push((idx, path));
        }
    }
    files.sort_by_key(|(idx, _)| *idx);
    Ok(files)
}

/// Runs `work(i, item)` over all items on up to `threads` workers. Each
/// worker takes a contiguous chunk and results come back in input order,
/// so the output does not depend on the thread count.
pub fn parallel_map<T, R, F>(items: Vec<T>, threads: usize, work: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(usize, &T) -> R + Sync,
{
    let threads = threads.max(1).min(items.len().max(1));
    if threads <= 1 {
        return items.iter().enumerate().map(|(i, t)| work(i, t)).collect();
    }
    let chunk = items.len().div_ceil(threads);
    let pieces: Vec<Vec<R>> = std::thread::scope(|scope| {
        let handles: Vec<_> = items
            .chunks(chunk)
            .enumerate()
            .map(|(ci, slice)| {
                let work = &work;
                scope.spawn(move || {
                    slice
                        .iter()
                        .enumerate()
                        .map(|(j, t)| work(ci * chunk + j, t))
                        .collect::<Vec<R>>()
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("worker panicked"))
            .collect()
    });
    pieces.into_iter().flatten().collect()
}

pub fn create_out_dir(dir: &Path) -> Result<(), CmdError> {
    std::fs::create_dir_all(dir)
        .map_err(|e| CmdError::Validation(format!("cannot create {}: {e}", dir.display())))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_ranges_and_indices() {
        let r = IndexRange::parse("3..10").unwrap();
        assert_eq!((r.start, r.end), (3, 10));
        assert!(IndexRange::parse("5..2").is_err());
        assert!(IndexRange::parse("abc").is_err());

        assert_eq!(file_index(Path::new("/x/img_0042.pgm")), Some(42));
        assert_eq!(file_index(Path::new("deg_heavy_0007.pgm")), Some(7));
        assert_eq!(file_index(Path::new("noindex.pgm")), None);
    }

    #[test]
    fn parallel_map_is_order_preserving() {
        let items: Vec<u64> = (0..37).collect();
        let seq = parallel_map(items.clone(), 1, |_, &x| x * x);
        let par = parallel_map(items, 4, |_, &x| x * x);
        assert_eq!(seq, par);
    }
}
