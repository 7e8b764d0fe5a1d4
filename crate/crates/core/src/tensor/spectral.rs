//! FFT-backed multi-channel 2-D correlation.
//!
//! All three convolution products (forward correlation, its adjoint, and the
//! kernel gradient) are evaluated as pointwise products on one zero-padded
//! periodic grid of at least `input + kernel - 1` samples per axis, which is
//! large enough that no wrapped term lands inside an extracted window.
//!
//! Spectra are stored bin-major (`[freq_bin][time_row]`) so that the short
//! time-axis transforms run over contiguous memory.

use std::sync::Arc;

use rayon::prelude::*;
use realfft::{ComplexToReal, RealToComplex};
use rustfft::num_complex::Complex;
use rustfft::Fft;

use super::conv::AxisGeometry;
use super::Real;

/// Upper bound on the bytes of cached input/gradient spectra per batch chunk.
const CHUNK_BYTES: usize = 256 << 20;

fn is_smooth(mut m: usize, primes: &[usize]) -> bool {
    for &p in primes {
        while m.is_multiple_of(p) {
            m /= p;
        }
    }
    m == 1
}

/// Smallest even size `>= n` with prime factors in {2, 3}; the short
/// time-axis transforms are markedly faster at these lengths.
pub(crate) fn fast_len_short(n: usize) -> usize {
    (n.max(2)..)
        .find(|&m| m % 2 == 0 && is_smooth(m, &[2, 3]))
        .expect("unbounded search")
}

/// Smallest size `>= n` that is a multiple of 8 (or even, below 64) with
/// prime factors in {2, 3, 5, 7, 11}.
pub(crate) fn fast_len(n: usize) -> usize {
    let align = if n < 64 { 2 } else { 8 };
    (n.max(2)..)
        .find(|&m| m % align == 0 && is_smooth(m, &[2, 3, 5, 7, 11]))
        .expect("unbounded search")
}

/// Periodic sample positions `start + q * step (mod period)` for `q < count`.
#[derive(Clone, Copy, Debug)]
struct Window {
    start: isize,
    step: usize,
    count: usize,
}

impl Window {
    fn index(&self, q: usize, period: usize) -> usize {
        (self.start + (q * self.step) as isize).rem_euclid(period as isize) as usize
    }

    /// All `count` positions in order, without a division per sample.
    fn positions(&self, period: usize) -> impl Iterator<Item = usize> {
        let step = self.step % period;
        let mut at = self.index(0, period);
        (0..self.count).map(move |_| {
            let here = at;
            at += step;
            if at >= period {
                at -= period;
            }
            here
        })
    }
}

struct Grid<T: Real> {
    rows: usize,
    cols: usize,
    bins: usize,
    r2c: Arc<dyn RealToComplex<T>>,
    c2r: Arc<dyn ComplexToReal<T>>,
    col_fwd: Arc<dyn Fft<T>>,
    col_inv: Arc<dyn Fft<T>>,
}

struct Workspace<T: Real> {
    row: Vec<T>,
    row_spec: Vec<Complex<T>>,
    real_scratch: Vec<Complex<T>>,
    col_scratch: Vec<Complex<T>>,
}

impl<T: Real> Grid<T> {
    fn new(min_rows: usize, min_cols: usize) -> Self {
        let rows = fast_len_short(min_rows);
        let cols = fast_len(min_cols);
        T::with_planners(|p| Grid {
            rows,
            cols,
            bins: cols / 2 + 1,
            r2c: p.real.plan_fft_forward(cols),
            c2r: p.real.plan_fft_inverse(cols),
            col_fwd: p.complex.plan_fft_forward(rows),
            col_inv: p.complex.plan_fft_inverse(rows),
        })
    }

    fn spectrum_len(&self) -> usize {
        self.rows * self.bins
    }

    fn workspace(&self) -> Workspace<T> {
        let real = self.r2c.get_scratch_len().max(self.c2r.get_scratch_len());
        let col = self
            .col_fwd
            .get_inplace_scratch_len()
            .max(self.col_inv.get_inplace_scratch_len());
        Workspace {
            row: vec![T::zero(); self.cols],
            row_spec: vec![Complex::default(); self.bins],
            real_scratch: vec![Complex::default(); real],
            col_scratch: vec![Complex::default(); col],
        }
    }

    /// Spectrum of a `rows x cols` plane whose sample `(r, c)` sits at grid
    /// position `(r * row_step, c * col_step)`.
    fn forward(
        &self,
        plane: &[T],
        rows: usize,
        cols: usize,
        steps: (usize, usize),
        ws: &mut Workspace<T>,
        spec: &mut Vec<Complex<T>>,
    ) {
        spec.clear();
        spec.resize(self.spectrum_len(), Complex::default());
        for r in 0..rows {
            ws.row.fill(T::zero());
            for (c, &v) in plane[r * cols..(r + 1) * cols].iter().enumerate() {
                ws.row[c * steps.1] = v;
            }
            self.r2c
                .process_with_scratch(&mut ws.row, &mut ws.row_spec, &mut ws.real_scratch)
                .expect("row transform length");
            let t = r * steps.0;
            for (k, &v) in ws.row_spec.iter().enumerate() {
                spec[k * self.rows + t] = v;
            }
        }
        self.col_fwd.process_with_scratch(spec, &mut ws.col_scratch);
    }

    /// Inverse transform of `spec` (destroyed), sampling the window
    /// `rows x cols` into `out` (row-major), scaled to undo the unnormalised FFTs.
    fn inverse_into(&self, spec: &mut [Complex<T>], rows: Window, cols: Window, out: &mut [T], ws: &mut Workspace<T>) {
        self.col_inv.process_with_scratch(spec, &mut ws.col_scratch);
        let norm = T::one() / T::of((self.rows * self.cols) as f64);
        let last = self.bins - 1;
        for (q, t) in rows.positions(self.rows).enumerate() {
            for (k, v) in ws.row_spec.iter_mut().enumerate() {
                *v = spec[k * self.rows + t];
            }
            // A real row has a purely real DC (and Nyquist) term; drop rounding residue.
            ws.row_spec[0].im = T::zero();
            if self.cols.is_multiple_of(2) {
                ws.row_spec[last].im = T::zero();
            }
            self.c2r
                .process_with_scratch(&mut ws.row_spec, &mut ws.row, &mut ws.real_scratch)
                .expect("row inverse length");
            let dst = &mut out[q * cols.count..(q + 1) * cols.count];
            if cols.step == 1 && cols.index(0, self.cols) + cols.count <= self.cols {
                let c0 = cols.index(0, self.cols);
                for (d, &v) in dst.iter_mut().zip(&ws.row[c0..c0 + cols.count]) {
                    *d = v * norm;
                }
            } else {
                for (d, c) in dst.iter_mut().zip(cols.positions(self.cols)) {
                    *d = ws.row[c] * norm;
                }
            }
        }
    }
}

/// Bins per cache tile of the pointwise products.
const TILE: usize = 128;

/// A set of spectra stored tile-major: `[tile][spectrum][re | im][TILE]`,
/// so that one tile of every spectrum in the set is contiguous in memory.
struct Bank<T> {
    count: usize,
    tiles: usize,
    data: Vec<T>,
}

impl<T: Real> Bank<T> {
    fn zeros(count: usize, bins: usize) -> Self {
        let tiles = bins.div_ceil(TILE);
        Bank {
            count,
            tiles,
            data: vec![T::zero(); tiles * count * 2 * TILE],
        }
    }

    fn block_len(&self) -> usize {
        self.count * 2 * TILE
    }

    fn block(&self, tile: usize) -> &[T] {
        let n = self.block_len();
        &self.data[tile * n..(tile + 1) * n]
    }

    fn empty() -> Self {
        Bank {
            count: 0,
            tiles: 0,
            data: Vec::new(),
        }
    }

    /// Resizes for `count` spectra of `bins`, reusing the allocation. Padding
    /// past `bins` in the last tile stays zero.
    fn reset(&mut self, count: usize, bins: usize) {
        let tiles = bins.div_ceil(TILE);
        if self.count != count || self.tiles != tiles {
            *self = Self::zeros(count, bins);
        }
    }

    fn scatter(&mut self, idx: usize, spec: &[Complex<T>]) {
        let n = self.block_len();
        for (tile, chunk) in spec.chunks(TILE).enumerate() {
            let at = tile * n + idx * 2 * TILE;
            let (re, im) = self.data[at..at + 2 * TILE].split_at_mut(TILE);
            for ((r, i), c) in re.iter_mut().zip(im.iter_mut()).zip(chunk) {
                *r = c.re;
                *i = c.im;
            }
        }
    }

    fn gather(&self, idx: usize, dst: &mut [Complex<T>]) {
        let n = self.block_len();
        for (tile, chunk) in dst.chunks_mut(TILE).enumerate() {
            let at = tile * n + idx * 2 * TILE;
            let (re, im) = self.data[at..at + 2 * TILE].split_at(TILE);
            for ((d, &r), &i) in chunk.iter_mut().zip(re).zip(im) {
                *d = Complex::new(r, i);
            }
        }
    }
}

/// Which operand of the pointwise product is conjugated.
#[derive(Clone, Copy)]
enum Conj {
    None,
    Lhs,
    Rhs,
}

/// Lanes accumulated in registers by the product kernel.
const LANES: usize = 16;

#[inline(always)]
fn lanes<T: Copy>(v: &[T], at: usize) -> &[T; LANES] {
    v[at..at + LANES].try_into().unwrap()
}

/// Accumulates an `MB x NB` block of outputs over one tile. `li[k * MB + a]`
/// and `ri[k * NB + c]` are operand offsets; `outs[a * NB + c]` are output offsets.
#[inline(always)]
fn mac_block<T: Real, const MB: usize, const NB: usize>(
    conj: Conj,
    dst: &mut [T],
    outs: &[usize],
    lb: &[T],
    rb: &[T],
    li: &[usize],
    ri: &[usize],
    k_dim: usize,
) {
    for s in (0..TILE).step_by(LANES) {
        let mut ar = [[[T::zero(); LANES]; NB]; MB];
        let mut ai = [[[T::zero(); LANES]; NB]; MB];
        for k in 0..k_dim {
            let mut xr = [[T::zero(); LANES]; MB];
            let mut xi = [[T::zero(); LANES]; MB];
            for a in 0..MB {
                let at = li[k * MB + a] + s;
                xr[a] = *lanes(lb, at);
                xi[a] = *lanes(lb, at + TILE);
                if let Conj::Lhs = conj {
                    for v in xi[a].iter_mut() {
                        *v = -*v;
                    }
                }
            }
            for c in 0..NB {
                let at = ri[k * NB + c] + s;
                let wr = lanes(rb, at);
                let mut wi = *lanes(rb, at + TILE);
                if let Conj::Rhs = conj {
                    for v in wi.iter_mut() {
                        *v = -*v;
                    }
                }
                for a in 0..MB {
                    for j in 0..LANES {
                        ar[a][c][j] += xr[a][j] * wr[j] - xi[a][j] * wi[j];
                        ai[a][c][j] += xr[a][j] * wi[j] + xi[a][j] * wr[j];
                    }
                }
            }
        }
        for a in 0..MB {
            for c in 0..NB {
                let at = outs[a * NB + c] + s;
                for j in 0..LANES {
                    dst[at + j] += ar[a][c][j];
                    dst[at + TILE + j] += ai[a][c][j];
                }
            }
        }
    }
}

/// `out[m * n_dim + n] += sum_k lhs[lhs_at(m, k)] * rhs[rhs_at(k, n)]`,
/// pointwise over bins, one tile at a time.
fn spectral_product<T: Real>(
    out: &mut Bank<T>,
    dims: (usize, usize, usize),
    lhs: (&Bank<T>, &(dyn Fn(usize, usize) -> usize + Sync)),
    rhs: (&Bank<T>, &(dyn Fn(usize, usize) -> usize + Sync)),
    conj: Conj,
) {
    const MB: usize = 2;
    const NB: usize = 4;
    let (m_dim, n_dim, k_dim) = dims;
    let block = out.block_len();
    let span = 2 * TILE;
    out.data.par_chunks_mut(block).enumerate().for_each_init(
        || (Vec::new(), Vec::new(), Vec::new()),
        |(li, ri, outs), (tile, dst)| {
            let lb = lhs.0.block(tile);
            let rb = rhs.0.block(tile);
            for n0 in (0..n_dim).step_by(NB) {
                let nb = NB.min(n_dim - n0);
                ri.clear();
                for k in 0..k_dim {
                    ri.extend((n0..n0 + nb).map(|n| rhs.1(k, n) * span));
                }
                for m0 in (0..m_dim).step_by(MB) {
                    let mb = MB.min(m_dim - m0);
                    li.clear();
                    for k in 0..k_dim {
                        li.extend((m0..m0 + mb).map(|m| lhs.1(m, k) * span));
                    }
                    outs.clear();
                    for m in m0..m0 + mb {
                        outs.extend((n0..n0 + nb).map(|n| (m * n_dim + n) * span));
                    }
                    let args = (conj, &mut *dst, &outs[..], lb, rb, &li[..], &ri[..], k_dim);
                    match (mb, nb) {
                        (2, 4) => mac_block::<T, 2, 4>(args.0, args.1, args.2, args.3, args.4, args.5, args.6, args.7),
                        (2, 3) => mac_block::<T, 2, 3>(args.0, args.1, args.2, args.3, args.4, args.5, args.6, args.7),
                        (1, 4) => mac_block::<T, 1, 4>(args.0, args.1, args.2, args.3, args.4, args.5, args.6, args.7),
                        (1, 3) => mac_block::<T, 1, 3>(args.0, args.1, args.2, args.3, args.4, args.5, args.6, args.7),
                        (4, 2) => mac_block::<T, 4, 2>(args.0, args.1, args.2, args.3, args.4, args.5, args.6, args.7),
                        (3, 2) => mac_block::<T, 3, 2>(args.0, args.1, args.2, args.3, args.4, args.5, args.6, args.7),
                        (2, 2) => mac_block::<T, 2, 2>(args.0, args.1, args.2, args.3, args.4, args.5, args.6, args.7),
                        (1, 2) => mac_block::<T, 1, 2>(args.0, args.1, args.2, args.3, args.4, args.5, args.6, args.7),
                        (4, 1) => mac_block::<T, 4, 1>(args.0, args.1, args.2, args.3, args.4, args.5, args.6, args.7),
                        (3, 1) => mac_block::<T, 3, 1>(args.0, args.1, args.2, args.3, args.4, args.5, args.6, args.7),
                        (2, 1) => mac_block::<T, 2, 1>(args.0, args.1, args.2, args.3, args.4, args.5, args.6, args.7),
                        _ => mac_block::<T, 1, 1>(args.0, args.1, args.2, args.3, args.4, args.5, args.6, args.7),
                    }
                }
            }
        },
    );
}

/// Kernel bank viewed in correlation terms: `kernel(o, i)` maps correlation
/// input channel `i` to correlation output channel `o`.
#[derive(Clone, Copy)]
pub(crate) struct KernelBank<'a, T> {
    pub data: &'a [T],
    pub outputs: usize,
    pub inputs: usize,
    /// Stored as `[input][output]` instead of `[output][input]`.
    pub swapped: bool,
}

impl<'a, T> KernelBank<'a, T> {
    fn offset(&self, o: usize, i: usize, k: usize) -> usize {
        if self.swapped {
            (i * self.outputs + o) * k
        } else {
            (o * self.inputs + i) * k
        }
    }
}

/// Cached kernel spectra of one layer, reusable across calls while the
/// weights are unchanged.
pub(crate) struct KernelSpectra<T> {
    bank: Bank<T>,
    outputs: usize,
    inputs: usize,
}

impl<T: Real> Default for KernelSpectra<T> {
    fn default() -> Self {
        KernelSpectra {
            bank: Bank::empty(),
            outputs: 0,
            inputs: 0,
        }
    }
}

/// One correlation layer geometry with its FFT grid.
pub(crate) struct SpectralConv<T: Real> {
    time: AxisGeometry,
    freq: AxisGeometry,
    grid: Grid<T>,
}

impl<T: Real> SpectralConv<T> {
    pub fn new(time: AxisGeometry, freq: AxisGeometry) -> Self {
        let grid = Grid::new(Self::period(time), Self::period(freq));
        SpectralConv { time, freq, grid }
    }

    /// Shortest circular period at which the correlation, its adjoint and
    /// the kernel gradient are all free of wrap-around on the samples read.
    fn period(a: AxisGeometry) -> usize {
        let p = a.pad_before;
        (a.input + p)
            .max(((a.output - 1) * a.stride + a.kernel).saturating_sub(p))
            .max(a.input)
            .max(a.kernel)
    }

    fn kernel_len(&self) -> usize {
        self.time.kernel * self.freq.kernel
    }

    fn in_plane(&self) -> usize {
        self.time.input * self.freq.input
    }

    fn out_plane(&self) -> usize {
        self.time.output * self.freq.output
    }

    fn chunk_size(&self, channels: usize) -> usize {
        let per_sample = channels.max(1) * self.grid.spectrum_len() * 2 * std::mem::size_of::<T>();
        (CHUNK_BYTES / per_sample).max(1)
    }

    /// Spectra of `planes` (each `rows x cols`) written, in order, into `bank`.
    fn spectra_into(&self, planes: &[&[T]], rows: usize, cols: usize, steps: (usize, usize), bank: &mut Bank<T>) {
        bank.reset(planes.len(), self.grid.spectrum_len());
        let group = 4 * rayon::current_num_threads();
        let mut bufs: Vec<Vec<Complex<T>>> = Vec::new();
        for (g, chunk) in planes.chunks(group).enumerate() {
            bufs.resize_with(chunk.len(), Vec::new);
            chunk.par_iter().zip(bufs.par_iter_mut()).for_each_init(
                || self.grid.workspace(),
                |ws, (p, buf)| self.grid.forward(p, rows, cols, steps, ws, buf),
            );
            for (j, buf) in bufs.iter().take(chunk.len()).enumerate() {
                bank.scatter(g * group + j, buf);
            }
        }
    }

    fn spectra(&self, planes: &[&[T]], rows: usize, cols: usize, steps: (usize, usize)) -> Bank<T> {
        let mut bank = Bank::empty();
        self.spectra_into(planes, rows, cols, steps, &mut bank);
        bank
    }

    /// Transforms every kernel of `bank` into `cache`, ordered `[o * inputs + i]`.
    pub fn prepare(&self, bank: KernelBank<'_, T>, cache: &mut KernelSpectra<T>) {
        let k = self.kernel_len();
        let planes: Vec<&[T]> = (0..bank.outputs * bank.inputs)
            .map(|j| {
                let start = bank.offset(j / bank.inputs, j % bank.inputs, k);
                &bank.data[start..start + k]
            })
            .collect();
        self.spectra_into(&planes, self.time.kernel, self.freq.kernel, (1, 1), &mut cache.bank);
        cache.outputs = bank.outputs;
        cache.inputs = bank.inputs;
    }

    /// Inverse transforms every spectrum of `specs`, sampling `rows x cols`
    /// windows into consecutive planes of `out`.
    fn inverse_all(&self, specs: &Bank<T>, rows: Window, cols: Window, out: &mut [T]) {
        let plane = rows.count * cols.count;
        out.par_chunks_mut(plane).enumerate().for_each_init(
            || {
                (
                    self.grid.workspace(),
                    vec![Complex::default(); self.grid.spectrum_len()],
                )
            },
            |(ws, buf), (idx, dst)| {
                specs.gather(idx, buf);
                self.grid.inverse_into(buf, rows, cols, dst, ws);
            },
        );
    }

    fn planes(data: &[T], first: usize, count: usize, len: usize) -> Vec<&[T]> {
        (first..first + count).map(|j| &data[j * len..(j + 1) * len]).collect()
    }

    /// Output window of a correlation.
    fn correlate_window(&self) -> (Window, Window) {
        (
            Window {
                start: -(self.time.pad_before as isize),
                step: self.time.stride,
                count: self.time.output,
            },
            Window {
                start: -(self.freq.pad_before as isize),
                step: self.freq.stride,
                count: self.freq.output,
            },
        )
    }

    /// Output window of the adjoint.
    fn adjoint_window(&self) -> (Window, Window) {
        (
            Window {
                start: self.time.pad_before as isize,
                step: 1,
                count: self.time.input,
            },
            Window {
                start: self.freq.pad_before as isize,
                step: 1,
                count: self.freq.input,
            },
        )
    }

    fn steps(&self) -> (usize, usize) {
        (self.time.stride, self.freq.stride)
    }

    /// Spectra of input-sized planes `first..first + count` of `x`.
    fn input_spectra(&self, x: &[T], first: usize, count: usize) -> Bank<T> {
        let planes = Self::planes(x, first, count, self.in_plane());
        self.spectra(&planes, self.time.input, self.freq.input, (1, 1))
    }

    /// Spectra of output-sized planes, placed on the stride lattice.
    fn output_spectra(&self, y: &[T], first: usize, count: usize) -> Bank<T> {
        let planes = Self::planes(y, first, count, self.out_plane());
        self.spectra(&planes, self.time.output, self.freq.output, self.steps())
    }

    /// `y[b, o] = sum_i x[b, i] (*) kernel(o, i)`, subsampled by the stride.
    /// `x` holds `batch * inputs` planes of the input size.
    pub fn correlate_with(&self, x: &[T], batch: usize, kernels: &KernelSpectra<T>) -> Vec<T> {
        let (cin, cout) = (kernels.inputs, kernels.outputs);
        let op = self.out_plane();
        let (rows, cols) = self.correlate_window();
        let mut y = vec![T::zero(); batch * cout * op];
        let chunk = self.chunk_size(cin + cout);
        for b0 in (0..batch).step_by(chunk) {
            let nb = chunk.min(batch - b0);
            let xs = self.input_spectra(x, b0 * cin, nb * cin);
            let ys = self.correlate_spectra(&xs, nb, kernels);
            self.inverse_all(&ys, rows, cols, &mut y[b0 * cout * op..(b0 + nb) * cout * op]);
        }
        y
    }

    fn correlate_spectra(&self, xs: &Bank<T>, nb: usize, kernels: &KernelSpectra<T>) -> Bank<T> {
        let (cin, cout) = (kernels.inputs, kernels.outputs);
        let mut ys = Bank::zeros(nb * cout, self.grid.spectrum_len());
        spectral_product(
            &mut ys,
            (nb, cout, cin),
            (xs, &|b, i| b * cin + i),
            (&kernels.bank, &|i, o| o * cin + i),
            Conj::Rhs,
        );
        ys
    }

    /// Adjoint of [`SpectralConv::correlate_with`]: maps `batch * outputs`
    /// output-sized planes back to `batch * inputs` input-sized planes.
    pub fn adjoint_with(&self, gy: &[T], batch: usize, kernels: &KernelSpectra<T>) -> Vec<T> {
        let (cin, cout) = (kernels.inputs, kernels.outputs);
        let ip = self.in_plane();
        let (rows, cols) = self.adjoint_window();
        let mut gx = vec![T::zero(); batch * cin * ip];
        let chunk = self.chunk_size(cin + cout);
        for b0 in (0..batch).step_by(chunk) {
            let nb = chunk.min(batch - b0);
            let gs = self.output_spectra(gy, b0 * cout, nb * cout);
            let xs = self.adjoint_spectra(&gs, nb, kernels);
            self.inverse_all(&xs, rows, cols, &mut gx[b0 * cin * ip..(b0 + nb) * cin * ip]);
        }
        gx
    }

    fn adjoint_spectra(&self, gs: &Bank<T>, nb: usize, kernels: &KernelSpectra<T>) -> Bank<T> {
        let (cin, cout) = (kernels.inputs, kernels.outputs);
        let mut xs = Bank::zeros(nb * cin, self.grid.spectrum_len());
        spectral_product(
            &mut xs,
            (nb, cin, cout),
            (gs, &|b, o| b * cout + o),
            (&kernels.bank, &|o, i| o * cin + i),
            Conj::None,
        );
        xs
    }

    /// Fused backward pass sharing one set of spectra between the input
    /// gradient and the gradient of `<correlate(x), gy>` with respect to the
    /// kernels (summed over the batch, laid out like `layout`). `x` and `gy` are in correlation terms; the input
    /// gradient is the adjoint of `gy` when `adjoint` is set, else the
    /// correlation of `x` (the transposed-layer case, where `x` is the
    /// upstream gradient). Returns `(input_grad, kernel_grad)`.
    pub fn gradients(
        &self,
        x: &[T],
        gy: &[T],
        batch: usize,
        kernels: &KernelSpectra<T>,
        layout: KernelBank<'_, T>,
        adjoint: bool,
    ) -> (Vec<T>, Vec<T>) {
        let (cin, cout) = (kernels.inputs, kernels.outputs);
        let (ip, op) = (self.in_plane(), self.out_plane());
        let mut acc = Bank::zeros(cout * cin, self.grid.spectrum_len());
        let mut gin = vec![T::zero(); batch * if adjoint { cin * ip } else { cout * op }];
        let chunk = self.chunk_size(cin + cout);
        for b0 in (0..batch).step_by(chunk) {
            let nb = chunk.min(batch - b0);
            let xs = self.input_spectra(x, b0 * cin, nb * cin);
            let gs = self.output_spectra(gy, b0 * cout, nb * cout);
            if adjoint {
                let (rows, cols) = self.adjoint_window();
                let spec = self.adjoint_spectra(&gs, nb, kernels);
                self.inverse_all(&spec, rows, cols, &mut gin[b0 * cin * ip..(b0 + nb) * cin * ip]);
            } else {
                let (rows, cols) = self.correlate_window();
                let spec = self.correlate_spectra(&xs, nb, kernels);
                self.inverse_all(&spec, rows, cols, &mut gin[b0 * cout * op..(b0 + nb) * cout * op]);
            }
            Self::accumulate_kernel_grad(&mut acc, &xs, &gs, nb, cin, cout);
        }
        (gin, self.finish_kernel_grad(&acc, layout))
    }

    fn accumulate_kernel_grad(acc: &mut Bank<T>, xs: &Bank<T>, gs: &Bank<T>, nb: usize, cin: usize, cout: usize) {
        // conj(G) X: the correlation of x against the upsampled gradient.
        spectral_product(
            acc,
            (cout, cin, nb),
            (gs, &|o, b| b * cout + o),
            (xs, &|b, i| b * cin + i),
            Conj::Lhs,
        );
    }

    fn finish_kernel_grad(&self, acc: &Bank<T>, layout: KernelBank<'_, T>) -> Vec<T> {
        let (cin, cout, kl) = (layout.inputs, layout.outputs, self.kernel_len());
        let rows = Window {
            start: -(self.time.pad_before as isize),
            step: 1,
            count: self.time.kernel,
        };
        let cols = Window {
            start: -(self.freq.pad_before as isize),
            step: 1,
            count: self.freq.kernel,
        };
        let mut flat = vec![T::zero(); cout * cin * kl];
        self.inverse_all(acc, rows, cols, &mut flat);
        if !layout.swapped {
            return flat;
        }
        let mut gw = vec![T::zero(); cout * cin * kl];
        for o in 0..cout {
            for i in 0..cin {
                let src = (o * cin + i) * kl;
                let dst = layout.offset(o, i, kl);
                gw[dst..dst + kl].copy_from_slice(&flat[src..src + kl]);
            }
        }
        gw
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fast_lengths_are_even_and_smooth() {
        assert_eq!(fast_len(1), 2);
        assert_eq!(fast_len(43), 44);
        assert_eq!(fast_len(1046), 1056);
        assert_eq!(fast_len_short(39), 48);
        assert_eq!(fast_len_short(43), 48);
        for n in 1..500 {
            let m = fast_len(n);
            assert!(m >= n && m.is_multiple_of(2) && is_smooth(m, &[2, 3, 5, 7, 11]));
            let m = fast_len_short(n);
            assert!(m >= n && m.is_multiple_of(2) && is_smooth(m, &[2, 3]));
        }
    }

    #[test]
    fn window_wraps_negative_offsets() {
        let w = Window {
            start: -2,
            step: 3,
            count: 3,
        };
        assert_eq!(w.index(0, 10), 8);
        assert_eq!(w.index(1, 10), 1);
        assert_eq!(w.index(2, 10), 4);
    }
}
