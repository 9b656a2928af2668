//! Data-parallel helpers with a sequential fallback.
//!
//! Every kernel here maps an index range to independent outputs, so the
//! parallel and sequential paths produce bit-identical results. Reductions
//! are always performed sequentially by the caller.

/// Execution policy for the data-parallel kernels.
///
/// `Parallel` silently degrades to sequential execution when the crate is
/// built without the `parallel` feature.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Exec {
    Sequential,
    #[default]
    Parallel,
}

impl Exec {
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Exec::Parallel
    }
}

/// Evaluates `f(i)` for `i in 0..n` and collects the results in order.
pub fn map_range<T, F>(exec: Exec, n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        if exec.is_parallel() {
            use rayon::prelude::*;
            return (0..n).into_par_iter().map(f).collect();
        }
    }
    let _ = exec;
    (0..n).map(f).collect()
}

/// Fills `out` chunk by chunk; `f(chunk_index, chunk)` sees disjoint slices.
pub fn for_each_chunk_mut<T, F>(exec: Exec, out: &mut [T], chunk: usize, f: F)
where
    T: Send,
    F: Fn(usize, &mut [T]) + Sync + Send,
{
    let chunk = chunk.max(1);
    #[cfg(feature = "parallel")]
    {
        if exec.is_parallel() {
            use rayon::prelude::*;
            out.par_chunks_mut(chunk)
                .enumerate()
                .for_each(|(i, c)| f(i, c));
            return;
        }
    }
    let _ = exec;
    out.chunks_mut(chunk).enumerate().for_each(|(i, c)| f(i, c));
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn both_paths_agree() {
        let f = |i: usize| (i as f64).sqrt().sin();
        let a = map_range(Exec::Sequential, 1000, f);
        let b = map_range(Exec::Parallel, 1000, f);
        assert_eq!(a, b);

        let mut x = vec![0.0; 103];
        let mut y = vec![0.0; 103];
        let fill = |ci: usize, c: &mut [f64]| {
            for (k, v) in c.iter_mut().enumerate() {
                *v = (ci * 10 + k) as f64;
            }
        };
        for_each_chunk_mut(Exec::Sequential, &mut x, 10, fill);
        for_each_chunk_mut(Exec::Parallel, &mut y, 10, fill);
        assert_eq!(x, y);
    }
}
