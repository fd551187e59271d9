//! Thin dispatch layer between the rayon and sequential builds.
//!
//! Every parallel site writes disjoint per-index slots and reads only
//! pre-step data, so outputs are bit-identical for any worker count and
//! for the sequential fallback (`--no-default-features`).

/// Below this length the per-item work never amortizes the fork-join cost,
/// so small batches stay on the calling thread even in parallel builds.
#[cfg(feature = "parallel")]
pub(crate) const SMALL_BATCH: usize = 64;

#[cfg(feature = "parallel")]
mod imp {
    use super::SMALL_BATCH;
    use rayon::prelude::*;

    pub(crate) fn fill_indexed<T, F>(out: &mut [T], f: F)
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        if out.len() < SMALL_BATCH {
            for (i, slot) in out.iter_mut().enumerate() {
                *slot = f(i);
            }
        } else {
            out.par_iter_mut().enumerate().for_each(|(i, slot)| *slot = f(i));
        }
    }

    pub(crate) fn fill3_indexed<A, B, C, F>(a: &mut [A], b: &mut [B], c: &mut [C], f: F)
    where
        A: Send,
        B: Send,
        C: Send,
        F: Fn(usize) -> (A, B, C) + Sync + Send,
    {
        if a.len() < SMALL_BATCH {
            for i in 0..a.len() {
                let (x, y, z) = f(i);
                a[i] = x;
                b[i] = y;
                c[i] = z;
            }
        } else {
            a.par_iter_mut()
                .zip(b.par_iter_mut())
                .zip(c.par_iter_mut())
                .enumerate()
                .for_each(|(i, ((x, y), z))| {
                    let (vx, vy, vz) = f(i);
                    *x = vx;
                    *y = vy;
                    *z = vz;
                });
        }
    }

    pub(crate) fn fill2_indexed<A, B, F>(a: &mut [A], b: &mut [B], f: F)
    where
        A: Send,
        B: Send,
        F: Fn(usize) -> (A, B) + Sync + Send,
    {
        if a.len() < SMALL_BATCH {
            for i in 0..a.len() {
                let (x, y) = f(i);
                a[i] = x;
                b[i] = y;
            }
        } else {
            a.par_iter_mut().zip(b.par_iter_mut()).enumerate().for_each(|(i, (x, y))| {
                let (vx, vy) = f(i);
                *x = vx;
                *y = vy;
            });
        }
    }

    pub(crate) fn map_indexed<T, F>(n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        if n < SMALL_BATCH {
            (0..n).map(f).collect()
        } else {
            (0..n).into_par_iter().map(f).collect()
        }
    }

    pub(crate) fn update_zip<T, U, F>(out: &mut [T], src: &[U], f: F)
    where
        T: Send,
        U: Sync,
        F: Fn(&mut T, &U) + Sync + Send,
    {
        if out.len() < SMALL_BATCH {
            for (t, u) in out.iter_mut().zip(src.iter()) {
                f(t, u);
            }
        } else {
            out.par_iter_mut().zip(src.par_iter()).for_each(|(t, u)| f(t, u));
        }
    }
}

#[cfg(not(feature = "parallel"))]
mod imp {
    pub(crate) fn fill_indexed<T, F>(out: &mut [T], f: F)
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        for (i, slot) in out.iter_mut().enumerate() {
            *slot = f(i);
        }
    }

    pub(crate) fn fill3_indexed<A, B, C, F>(a: &mut [A], b: &mut [B], c: &mut [C], f: F)
    where
        A: Send,
        B: Send,
        C: Send,
        F: Fn(usize) -> (A, B, C) + Sync + Send,
    {
        for i in 0..a.len() {
            let (x, y, z) = f(i);
            a[i] = x;
            b[i] = y;
            c[i] = z;
        }
    }

    pub(crate) fn fill2_indexed<A, B, F>(a: &mut [A], b: &mut [B], f: F)
    where
        A: Send,
        B: Send,
        F: Fn(usize) -> (A, B) + Sync + Send,
    {
        for i in 0..a.len() {
            let (x, y) = f(i);
            a[i] = x;
            b[i] = y;
        }
    }

    pub(crate) fn map_indexed<T, F>(n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        (0..n).map(f).collect()
    }

    pub(crate) fn update_zip<T, U, F>(out: &mut [T], src: &[U], f: F)
    where
        T: Send,
        U: Sync,
        F: Fn(&mut T, &U) + Sync + Send,
    {
        for (t, u) in out.iter_mut().zip(src.iter()) {
            f(t, u);
        }
    }
}

pub(crate) use imp::{fill2_indexed, fill3_indexed, fill_indexed, map_indexed, update_zip};
