//! Acceptance gate. Prints one PASS/FAIL line per criterion.
//!
//! The process fails when a criterion fails for any reason other than a
//! documented limitation (listed in `KNOWN_LIMITATIONS`).

use std::collections::{BTreeMap, HashMap};
use std::process::ExitCode;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::Instant;

use rand::rngs::StdRng;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};

use tidepool::core::layout::OverlapVerdict;
use tidepool::core::plan::Plan;
use tidepool::core::otp1::FormatError;
use tidepool::dispatch::{self, Handle, ModuleRegistry, CORE};
use tidepool::qr::{self, QrConfig, Variant};
use tidepool::status::{self, CastingGuard};
use tidepool::{
    devices, interop, ops, promote, BinaryOp, DType, Error, ErrorCode, IndexArray, IndexAtom, IndexExpr, Layout, Mask,
    MathMode, RangeSpec, Scalar, Tensor, UnaryOp,
};

const DTYPES: [DType; 15] = [
    DType::Bool,
    DType::Int8,
    DType::UInt8,
    DType::Int16,
    DType::UInt16,
    DType::Int32,
    DType::UInt32,
    DType::Int64,
    DType::UInt64,
    DType::Half,
    DType::Float,
    DType::Double,
    DType::ComplexHalf,
    DType::ComplexFloat,
    DType::ComplexDouble,
];

/// Sub-checks that cannot hold for any lattice of this shape.
const KNOWN_LIMITATIONS: &[&str] = &["promotion associativity"];

type Res<T> = Result<T, Error>;

struct Verdict {
    pass: bool,
    detail: String,
    /// Failing sub-checks.
    failed: Vec<&'static str>,
}

impl Verdict {
    fn new() -> Verdict {
        Verdict { pass: true, detail: String::new(), failed: Vec::new() }
    }

    fn check(&mut self, name: &'static str, ok: bool, note: impl Into<String>) {
        let note = note.into();
        if !self.detail.is_empty() {
            self.detail.push_str("; ");
        }
        self.detail.push_str(&format!("{name}: {}", if ok { "ok".to_string() } else { format!("FAILED {note}") }));
        if ok && !note.is_empty() {
            self.detail.push_str(&format!(" ({note})"));
        }
        if !ok {
            self.pass = false;
            self.failed.push(name);
        }
    }
}

fn cpu() -> tidepool::Device {
    devices::cpu()
}

fn emu0() -> tidepool::Device {
    devices::emu(0).expect("emulated device 0")
}

fn bytes_of(t: &Tensor) -> Vec<u8> {
    let c = if t.is_contiguous() && t.offset() == 0 && t.storage().nbytes() == t.numel() * t.dtype().size() {
        t.clone()
    } else {
        ops::cast(t, None, None).unwrap()
    };
    c.storage().to_bytes().unwrap()
}

// ---------------------------------------------------------------- QR

/// Textbook modified Gram-Schmidt on a column-major n x n array.
fn mgs_oracle(a: &[f64], n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut q = a.to_vec();
    let mut r = vec![0.0; n * n];
    for k in 0..n {
        let nrm = (0..n).map(|i| q[i + k * n] * q[i + k * n]).sum::<f64>().sqrt();
        r[k + k * n] = nrm;
        for i in 0..n {
            q[i + k * n] /= nrm;
        }
        for j in k + 1..n {
            let d: f64 = (0..n).map(|i| q[i + k * n] * q[i + j * n]).sum();
            r[k + j * n] = d;
            for i in 0..n {
                q[i + j * n] -= d * q[i + k * n];
            }
        }
    }
    (q, r)
}

fn ulp_distance(a: f64, b: f64) -> u64 {
    if a == b {
        return 0;
    }
    let key = |x: f64| {
        let i = x.to_bits() as i64;
        if i < 0 {
            i64::MIN - i
        } else {
            i
        }
    };
    key(a).abs_diff(key(b))
}

fn crit_qr_double() -> Res<Verdict> {
    let mut v = Verdict::new();
    let a: Vec<f64> = (0..25).map(|i| i as f64 + if i % 6 == 0 { 1.0 } else { 0.0 }).collect();
    let (oq, or) = mgs_oracle(&a, 5);
    let mut reps = Vec::new();
    for variant in [Variant::Column, Variant::RankOne] {
        let rep = qr::run(&QrConfig { variant, ..QrConfig::default() })?;
        v.check(
            if variant == Variant::Column { "column norms" } else { "rank-one norms" },
            rep.orthogonality <= 1e-12 && rep.residual <= 1e-12,
            format!("{:.2e}, {:.2e}", rep.orthogonality, rep.residual),
        );
        reps.push(rep);
    }
    v.check("demo matrix", reps[0].a.to_f64_vec()? == a, "");
    let (q0, r0) = (reps[0].q.to_f64_vec()?, reps[0].r.to_f64_vec()?);
    let (q1, r1) = (reps[1].q.to_f64_vec()?, reps[1].r.to_f64_vec()?);
    let worst = q0.iter().zip(&q1).chain(r0.iter().zip(&r1)).map(|(&x, &y)| ulp_distance(x, y)).max().unwrap_or(0);
    v.check("variants within 1 ulp", worst <= 1, format!("max {worst} ulp"));
    let dev = q0.iter().zip(&oq).chain(r0.iter().zip(&or)).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    v.check("matches oracle", dev <= 1e-12, format!("max |diff| {dev:.2e}"));
    Ok(v)
}

fn crit_qr_mixed() -> Res<Verdict> {
    let mut v = Verdict::new();
    for variant in [Variant::Column, Variant::RankOne] {
        let cfg = QrConfig {
            variant,
            dtype_q: DType::Double,
            device_q: cpu(),
            dtype_r: DType::Float,
            device_r: emu0(),
            byteswap_q: true,
        };
        let rep = qr::run(&cfg)?;
        let layout_ok = !rep.q.byteorder().is_native() && rep.r.device().name() == "emu0" && rep.r.dtype() == DType::Float;
        v.check(
            if variant == Variant::Column { "column" } else { "rank-one" },
            layout_ok && rep.orthogonality <= 1e-5 && rep.residual <= 1e-5,
            format!("{:.2e}, {:.2e}", rep.orthogonality, rep.residual),
        );
    }
    Ok(v)
}

// ---------------------------------------------------------- promotion

#[derive(Clone, Copy, PartialEq)]
enum Set {
    Bool,
    Int { lo: i128, hi: i128 },
    Real { mant: u32, exp: u32 },
    Cplx { mant: u32, exp: u32 },
}

fn value_set(d: DType) -> Set {
    let int = |bits: u32, signed: bool| {
        if signed {
            Set::Int { lo: -(1i128 << (bits - 1)), hi: (1i128 << (bits - 1)) - 1 }
        } else {
            Set::Int { lo: 0, hi: (1i128 << bits) - 1 }
        }
    };
    match d {
        DType::Bool => Set::Bool,
        DType::Int8 => int(8, true),
        DType::UInt8 => int(8, false),
        DType::Int16 => int(16, true),
        DType::UInt16 => int(16, false),
        DType::Int32 => int(32, true),
        DType::UInt32 => int(32, false),
        DType::Int64 => int(64, true),
        DType::UInt64 => int(64, false),
        DType::Half => Set::Real { mant: 11, exp: 5 },
        DType::Float => Set::Real { mant: 24, exp: 8 },
        DType::Double => Set::Real { mant: 53, exp: 11 },
        DType::ComplexHalf => Set::Cplx { mant: 11, exp: 5 },
        DType::ComplexFloat => Set::Cplx { mant: 24, exp: 8 },
        DType::ComplexDouble => Set::Cplx { mant: 53, exp: 11 },
    }
}

/// Does the value set of `c` contain that of `d`?
fn contains(c: DType, d: DType) -> bool {
    match (value_set(c), value_set(d)) {
        (_, Set::Bool) => true,
        (Set::Bool, _) => false,
        (Set::Int { lo, hi }, Set::Int { lo: l, hi: h }) => lo <= l && h <= hi,
        (Set::Real { mant, .. } | Set::Cplx { mant, .. }, Set::Int { lo, hi }) => {
            lo.abs().max(hi) <= 1i128 << mant
        }
        (Set::Real { mant, exp } | Set::Cplx { mant, exp }, Set::Real { mant: m, exp: e }) => mant >= m && exp >= e,
        (Set::Cplx { mant, exp }, Set::Cplx { mant: m, exp: e }) => mant >= m && exp >= e,
        _ => false,
    }
}

fn kind_rank(d: DType) -> u8 {
    match value_set(d) {
        Set::Bool => 0,
        Set::Int { .. } => 1,
        Set::Real { .. } => 2,
        Set::Cplx { .. } => 3,
    }
}

/// Smallest dtype containing both, integers before floats on ties; with no
/// such dtype, double (complex double if either side is complex).
fn promote_oracle(a: DType, b: DType) -> DType {
    let best = DTYPES
        .iter()
        .copied()
        .filter(|&c| contains(c, a) && contains(c, b))
        .min_by_key(|&c| (c.size(), kind_rank(c)));
    best.unwrap_or(if a.is_complex() || b.is_complex() { DType::ComplexDouble } else { DType::Double })
}

fn crit_promotion() -> Res<Verdict> {
    let mut v = Verdict::new();
    let mut mismatches = Vec::new();
    for &a in &DTYPES {
        for &b in &DTYPES {
            if promote(a, b) != promote_oracle(a, b) {
                mismatches.push(format!("{a}+{b}={} want {}", promote(a, b), promote_oracle(a, b)));
            }
        }
    }
    v.check("225 pairs vs oracle", mismatches.is_empty(), mismatches.join(", "));
    let comm = DTYPES.iter().all(|&a| DTYPES.iter().all(|&b| promote(a, b) == promote(b, a)));
    v.check("commutativity", comm, "");
    v.check("idempotence", DTYPES.iter().all(|&a| promote(a, a) == a), "");
    let mut counter = Vec::new();
    for &a in &DTYPES {
        for &b in &DTYPES {
            for &c in &DTYPES {
                if promote(promote(a, b), c) != promote(a, promote(b, c)) {
                    counter.push((a, b, c));
                }
            }
        }
    }
    let note = match counter.first() {
        Some(&(a, b, c)) => format!(
            "{} of 3375 triples differ, e.g. ({a}+{b})+{c}={} but {a}+({b}+{c})={}",
            counter.len(),
            promote(promote(a, b), c),
            promote(a, promote(b, c))
        ),
        None => String::new(),
    };
    v.check("promotion associativity", counter.is_empty(), note);
    let stated = promote(DType::Int8, DType::UInt8) == DType::Int16 && promote(DType::Int64, DType::Float) == DType::Double;
    v.check("stated cases", stated, "");
    Ok(v)
}

// ----------------------------------------------------------- indexing

/// One group of source axes: the index tuples it allows, and whether it
/// produces an output axis.
struct Group {
    axis: bool,
    options: Vec<Vec<usize>>,
}

fn wrap(i: i64, n: usize) -> usize {
    (if i < 0 { i + n as i64 } else { i }) as usize
}

fn slice_indices(r: &RangeSpec, n: usize) -> Vec<usize> {
    let n = n as i64;
    let norm = |x: i64| if x < 0 { x + n } else { x };
    let (start, stop) = if r.step > 0 {
        (r.start.map_or(0, |x| norm(x).clamp(0, n)), r.stop.map_or(n, |x| norm(x).clamp(0, n)))
    } else {
        (r.start.map_or(n - 1, |x| norm(x).clamp(-1, n - 1)), r.stop.map_or(-1, |x| norm(x).clamp(-1, n - 1)))
    };
    let mut out = Vec::new();
    let mut i = start;
    while (r.step > 0 && i < stop) || (r.step < 0 && i > stop) {
        out.push(i as usize);
        i += r.step;
    }
    out
}

/// Output dims and, per output element in column-major order, the source
/// index it reads.
fn index_oracle(atoms: &[IndexAtom], dims: &[usize]) -> (Vec<usize>, Vec<Vec<usize>>) {
    let consumed: usize = atoms
        .iter()
        .map(|a| match a {
            IndexAtom::Ellipsis => 0,
            IndexAtom::Array(x) => x.width(),
            IndexAtom::Mask(m) => m.dims().len(),
            _ => 1,
        })
        .sum();
    let mut groups = Vec::new();
    let mut axis = 0;
    let colon = |axis: usize| Group { axis: true, options: (0..dims[axis]).map(|i| vec![i]).collect() };
    for a in atoms {
        match a {
            IndexAtom::Ellipsis => {
                for _ in 0..dims.len() - consumed {
                    groups.push(colon(axis));
                    axis += 1;
                }
            }
            IndexAtom::Colon => {
                groups.push(colon(axis));
                axis += 1;
            }
            IndexAtom::Scalar(i) => {
                groups.push(Group { axis: false, options: vec![vec![wrap(*i, dims[axis])]] });
                axis += 1;
            }
            IndexAtom::Range(r) => {
                groups.push(Group { axis: true, options: slice_indices(r, dims[axis]).into_iter().map(|i| vec![i]).collect() });
                axis += 1;
            }
            IndexAtom::Array(x) => {
                let w = x.width();
                let options =
                    x.values().chunks(w).map(|t| t.iter().enumerate().map(|(j, &v)| wrap(v, dims[axis + j])).collect()).collect();
                groups.push(Group { axis: true, options });
                axis += w;
            }
            IndexAtom::Mask(m) => {
                let md = m.dims();
                let mut options = Vec::new();
                for (lin, &b) in m.values().iter().enumerate() {
                    if b {
                        let mut rem = lin;
                        options.push(md.iter().map(|&d| {
                            let i = rem % d;
                            rem /= d;
                            i
                        }).collect());
                    }
                }
                groups.push(Group { axis: true, options });
                axis += md.len();
            }
        }
    }
    while axis < dims.len() {
        groups.push(colon(axis));
        axis += 1;
    }
    let out_dims: Vec<usize> = groups.iter().filter(|g| g.axis).map(|g| g.options.len()).collect();
    let total: usize = groups.iter().map(|g| g.options.len()).product();
    let mut sources = Vec::with_capacity(total);
    let mut choice = vec![0usize; groups.len()];
    for _ in 0..total {
        sources.push(groups.iter().zip(&choice).flat_map(|(g, &c)| g.options[c].clone()).collect());
        for (g, c) in groups.iter().zip(choice.iter_mut()) {
            *c += 1;
            if *c < g.options.len() {
                break;
            }
            *c = 0;
        }
    }
    (out_dims, sources)
}

fn random_expr(rng: &mut StdRng, dims: &[usize]) -> Vec<IndexAtom> {
    let n = dims.len();
    let advanced_at = if rng.gen_bool(0.6) && n > 0 { Some(rng.gen_range(0..n)) } else { None };
    let mut atoms = Vec::new();
    let mut axis = 0;
    while axis < n {
        if advanced_at == Some(axis) {
            let w = rng.gen_range(1..=(n - axis).min(2));
            if rng.gen_bool(0.5) {
                let md = dims[axis..axis + w].to_vec();
                let cnt: usize = md.iter().product();
                atoms.push(IndexAtom::Mask(Mask::new(md, (0..cnt).map(|_| rng.gen_bool(0.5)).collect()).unwrap()));
            } else {
                let len = rng.gen_range(0..5);
                let mut vals = Vec::new();
                for _ in 0..len {
                    for j in 0..w {
                        let e = dims[axis + j] as i64;
                        vals.push(rng.gen_range(-e..e));
                    }
                }
                atoms.push(IndexAtom::Array(if w == 1 && rng.gen_bool(0.7) {
                    IndexArray::one_d(vals)
                } else {
                    IndexArray::tuples(w, vals).unwrap()
                }));
            }
            axis += w;
            continue;
        }
        let e = dims[axis] as i64;
        atoms.push(match rng.gen_range(0..4) {
            0 => IndexAtom::Scalar(rng.gen_range(-e..e)),
            1 => IndexAtom::Colon,
            _ => {
                let pick = |rng: &mut StdRng| if rng.gen_bool(0.3) { None } else { Some(rng.gen_range(-e - 1..=e + 1)) };
                let mut step = rng.gen_range(1..=3);
                if rng.gen_bool(0.4) {
                    step = -step;
                }
                IndexAtom::Range(RangeSpec::new(pick(rng), pick(rng), step))
            }
        });
        axis += 1;
    }
    // replace a run of colons by an ellipsis, or drop trailing colons
    if rng.gen_bool(0.3) {
        let pos = rng.gen_range(0..=atoms.len());
        let mut end = pos;
        while end < atoms.len() && atoms[end] == IndexAtom::Colon && rng.gen_bool(0.7) {
            end += 1;
        }
        atoms.splice(pos..end, [IndexAtom::Ellipsis]);
    } else {
        while atoms.last() == Some(&IndexAtom::Colon) && rng.gen_bool(0.5) {
            atoms.pop();
        }
    }
    atoms
}

/// A tensor with distinct values whose layout is a permuted and possibly
/// reversed view of a larger buffer.
fn random_tensor(rng: &mut StdRng, dims: &[usize]) -> Res<Tensor> {
    let n = dims.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let base_dims: Vec<usize> = order.iter().map(|&a| dims[a] + usize::from(rng.gen_bool(0.3))).collect();
    let numel: usize = base_dims.iter().product();
    let base = ops::arange(numel, DType::Int32, &cpu())?.reshape(&base_dims)?;
    let atoms: Vec<IndexAtom> = order
        .iter()
        .zip(&base_dims)
        .map(|(&a, &bd)| {
            let d = dims[a] as i64;
            if rng.gen_bool(0.3) {
                // reversed, ending at 0 or 1
                let start = bd as i64 - 1 - i64::from(bd as i64 > d && rng.gen_bool(0.5));
                IndexAtom::Range(RangeSpec::new(Some(start), if start + 1 == d { None } else { Some(start - d) }, -1))
            } else {
                IndexAtom::Range(RangeSpec::new(Some(0), Some(d), 1))
            }
        })
        .collect();
    let view = base.index(&IndexExpr::new(atoms)?)?;
    // undo the permutation so axis a has extent dims[a]
    let mut inverse = vec![0; n];
    for (i, &a) in order.iter().enumerate() {
        inverse[a] = i;
    }
    let t = view.permute(&inverse)?;
    assert_eq!(t.dims(), dims);
    Ok(t)
}

fn col_major_indices(dims: &[usize]) -> Vec<Vec<usize>> {
    let total: usize = dims.iter().product();
    (0..total)
        .map(|mut lin| {
            dims.iter()
                .map(|&d| {
                    let i = lin % d;
                    lin /= d;
                    i
                })
                .collect()
        })
        .collect()
}

fn crit_indexing() -> Res<Verdict> {
    let mut v = Verdict::new();
    let mut rng = StdRng::seed_from_u64(0x1dec);
    let cases = 10_000;
    let (mut bad_value, mut bad_view, mut bad_bound, mut advanced, mut basic) = (0, 0, 0, 0, 0);
    let mut first_bad = String::new();
    for _ in 0..cases {
        let n = rng.gen_range(0..=4);
        let dims: Vec<usize> = (0..n).map(|_| rng.gen_range(1..=5)).collect();
        let t = random_tensor(&mut rng, &dims)?;
        let atoms = random_expr(&mut rng, &dims);
        let expr = IndexExpr::new(atoms.clone())?;
        let (odims, sources) = index_oracle(&atoms, &dims);
        let expected: Vec<Scalar> = sources.iter().map(|s| t.get(s)).collect::<Res<_>>()?;
        let r = t.index(&expr)?;
        let got = r.to_scalars()?;
        if r.dims() != odims.as_slice() || got != expected {
            bad_value += 1;
            if first_bad.is_empty() {
                first_bad = format!("{atoms:?} on {dims:?}");
            }
        }
        if expr.is_basic() {
            basic += 1;
            let same_bytes = col_major_indices(&odims)
                .iter()
                .zip(&sources)
                .all(|(o, s)| r.layout().offset_of(o) == t.layout().offset_of(s));
            if !r.shares_storage(&t) || !same_bytes {
                bad_view += 1;
            }
        } else {
            advanced += 1;
            if r.shares_storage(&t) {
                bad_view += 1;
            }
        }
        let size_bound = expr.bind_to_size(&dims)?;
        let stride_bound = size_bound.bind_to_strides(t.strides())?;
        let a = t.index_bound(&size_bound)?.to_scalars()?;
        let b = t.index_bound(&stride_bound)?.to_scalars()?;
        if a != expected || b != expected {
            bad_bound += 1;
        }
    }
    v.check("gather oracle", bad_value == 0, format!("{bad_value}/{cases} wrong {first_bad}"));
    v.check("views", bad_view == 0, format!("{basic} basic share bytes, {advanced} advanced copy"));
    v.check("bound equals unbound", bad_bound == 0, format!("{bad_bound} differ"));
    Ok(v)
}

// ------------------------------------------------------------ overlap

fn crit_overlap() -> Res<Verdict> {
    let mut v = Verdict::new();
    let mut rng = StdRng::seed_from_u64(0x5a9);
    let mut wrong = 0;
    for case in 0..100 {
        let rows = rng.gen_range(3..=6);
        let cols = rng.gen_range(1..=5);
        let (sr, sc) = (rng.gen_range(1..=2), rng.gen_range(1..=2));
        let transpose = rng.gen_bool(0.5);
        let (br, bc) = if transpose { (cols * sc, rows * sr) } else { (rows * sr, cols * sc) };
        let base = ops::arange(br * bc, DType::Double, &cpu())?.reshape(&[br, bc])?;
        let rev = rng.gen_bool(0.5);
        let along = |s: usize, reverse: bool| {
            let step = if reverse { -(s as i64) } else { s as i64 };
            IndexAtom::Range(RangeSpec::new(None, None, step))
        };
        let a = if transpose {
            base.index(&IndexExpr::new(vec![along(sc, false), along(sr, rev)])?)?.t()
        } else {
            base.index(&IndexExpr::new(vec![along(sr, rev), along(sc, false)])?)?
        };
        assert_eq!(a.dims(), &[rows, cols]);
        let before_base = base.to_f64_vec()?;
        let mut expected: Vec<Vec<f64>> =
            (0..rows).map(|i| (0..cols).map(|j| a.get(&[i, j]).unwrap().as_f64()).collect()).collect();
        expected.swap(1, 2);
        let lhs = IndexExpr::new(vec![IndexAtom::Array(IndexArray::one_d(vec![1, 2])), IndexAtom::Colon])?;
        if case % 2 == 0 {
            let rhs = a.index(&IndexExpr::new(vec![IndexAtom::Array(IndexArray::one_d(vec![2, 1])), IndexAtom::Colon])?)?;
            a.assign(&lhs, &rhs)?;
        } else {
            // aliasing source: rows 2 and 1 as a reversed view of `a`
            let rhs = a.index(&IndexExpr::new(vec![IndexAtom::Range(RangeSpec::new(Some(2), Some(0), -1)), IndexAtom::Colon])?)?;
            a.assign(&lhs, &rhs)?;
        }
        let got: Vec<Vec<f64>> =
            (0..rows).map(|i| (0..cols).map(|j| a.get(&[i, j]).unwrap().as_f64()).collect()).collect();
        // bytes outside the view are untouched
        let after = base.to_f64_vec()?;
        let mut touched = 0;
        for (x, y) in before_base.iter().zip(&after) {
            touched += usize::from(x != y);
        }
        if got != expected || touched > 2 * cols {
            wrong += 1;
        }
    }
    v.check("row swap on strided matrices", wrong == 0, format!("{wrong}/100 wrong"));

    let mut rng = StdRng::seed_from_u64(0x0e1a);
    let (mut fneg, mut fpos, mut overlapping, total) = (0, 0, 0, 20_000);
    for _ in 0..total {
        let n = rng.gen_range(1..=3);
        let elem = [1usize, 2, 4, 8][rng.gen_range(0..4)];
        let dims: Vec<usize> = (0..n).map(|_| rng.gen_range(1..=4)).collect();
        let strides: Vec<isize> = (0..n).map(|_| rng.gen_range(-16..=16)).collect();
        let offset: isize = dims.iter().zip(&strides).map(|(&d, &s)| (-s * (d as isize - 1)).max(0)).sum();
        let l = Layout::new(offset as usize, dims.clone(), strides)?;
        let mut offs: Vec<isize> = col_major_indices(&dims).iter().map(|i| l.offset_of(i)).collect();
        offs.sort();
        let truth = offs.windows(2).any(|w| w[1] - w[0] < elem as isize);
        let claim = l.self_overlap(elem);
        overlapping += usize::from(truth);
        if truth && !claim {
            fneg += 1;
        }
        if claim && !truth {
            fpos += 1;
        }
    }
    let disjoint = total - overlapping;
    v.check(
        "self-overlap vs enumeration",
        fneg == 0,
        format!(
            "{fneg} false negatives; {fpos} false positives of {disjoint} non-overlapping layouts ({:.2}%)",
            100.0 * fpos as f64 / disjoint.max(1) as f64
        ),
    );
    // pair verdicts against enumeration
    let a = ops::arange(12, DType::Float, &cpu())?;
    let lo = a.index(&IndexExpr::new(vec![IndexAtom::range(0, 6)])?)?;
    let hi = a.index(&IndexExpr::new(vec![IndexAtom::range(6, 12)])?)?;
    let mid = a.index(&IndexExpr::new(vec![IndexAtom::range(3, 9)])?)?;
    let verdicts = (lo.overlap(&hi), lo.overlap(&lo.clone()), lo.overlap(&mid));
    v.check(
        "pair verdicts",
        verdicts == (OverlapVerdict::Disjoint, OverlapVerdict::ExactOverlap, OverlapVerdict::PossibleOverlap),
        "",
    );
    Ok(v)
}

// ----------------------------------------------------- canonical plans

fn naive_offsets(layouts: &[&Layout]) -> Vec<Vec<isize>> {
    col_major_indices(&layouts[0].dims).iter().map(|i| layouts.iter().map(|l| l.offset_of(i)).collect()).collect()
}

fn crit_canonical() -> Res<Verdict> {
    let mut v = Verdict::new();
    let mut rng = StdRng::seed_from_u64(0xca11);
    let (mut wrong, mut merged_axes, mut transposed, mut negative) = (0, 0usize, 0, 0);
    for _ in 0..1000 {
        let n = rng.gen_range(1..=4);
        let dims: Vec<usize> = (0..n).map(|_| rng.gen_range(1..=5)).collect();
        let views = rng.gen_range(1..=3);
        let mut layouts = Vec::new();
        for _ in 0..views {
            let mut l = Layout::contiguous(&dims, 8)?;
            if rng.gen_bool(0.5) {
                let mut order: Vec<usize> = (0..n).collect();
                order.shuffle(&mut rng);
                // a permuted contiguous buffer viewed back in the original axis order
                let pd: Vec<usize> = order.iter().map(|&a| dims[a]).collect();
                let pl = Layout::contiguous(&pd, 8)?;
                let mut strides = vec![0; n];
                for (i, &a) in order.iter().enumerate() {
                    strides[a] = pl.strides[i];
                }
                l = Layout::new(0, dims.clone(), strides)?;
                transposed += 1;
            }
            let mut offset = 0isize;
            let mut strides = l.strides.clone();
            for a in 0..n {
                if rng.gen_bool(0.25) {
                    offset += strides[a] * (dims[a] as isize - 1);
                    strides[a] = -strides[a];
                    negative += 1;
                }
            }
            layouts.push(Layout::new(offset as usize, dims.clone(), strides)?);
        }
        let refs: Vec<&Layout> = layouts.iter().collect();
        let plan = Plan::canonical(&refs);
        merged_axes += n - plan.dims().len();
        let mut seen = Vec::new();
        plan.for_each(|o| seen.push(o.iter().map(|&x| x as isize).collect::<Vec<_>>()));
        let mut want = naive_offsets(&refs);
        seen.sort();
        want.sort();
        if seen != want {
            wrong += 1;
        }
    }
    v.check(
        "multiset equality",
        wrong == 0,
        format!("{wrong}/1000 differ; {merged_axes} axes removed, {transposed} permuted, {negative} reversed strides"),
    );
    Ok(v)
}

// ----------------------------------------------------------- byte order

fn random_values(rng: &mut StdRng, dtype: DType, n: usize) -> Vec<Scalar> {
    (0..n)
        .map(|i| match dtype.kind() {
            tidepool::Kind::Bool => Scalar::Bool(rng.gen_bool(0.5)),
            tidepool::Kind::Signed => Scalar::Int(rng.gen_range(-100..100)),
            tidepool::Kind::Unsigned => Scalar::UInt(rng.gen_range(0..200)),
            tidepool::Kind::Float => Scalar::Float(match i % 9 {
                0 => 0.0,
                1 => -0.0,
                2 => f64::INFINITY,
                3 => f64::NAN,
                _ => rng.gen_range(-4.0..4.0),
            }),
            tidepool::Kind::Complex => Scalar::Complex(rng.gen_range(-4.0..4.0), rng.gen_range(-4.0..4.0)),
        })
        .collect()
}

fn swapped_copy(t: &Tensor) -> Res<Tensor> {
    let mut c = ops::cast(t, None, None)?;
    c.byteswap()?;
    Ok(c)
}

fn crit_byteorder() -> Res<Verdict> {
    let mut v = Verdict::new();
    let mut rng = StdRng::seed_from_u64(0xb0);
    let (mut checked, mut wrong, mut involution_bad) = (0, 0, 0);
    let mut first = String::new();
    for &d in &DTYPES {
        let x = Tensor::from_values(&random_values(&mut rng, d, 24), &[4, 6], d, &cpu())?;
        let y = Tensor::from_values(&random_values(&mut rng, d, 24), &[4, 6], d, &cpu())?;
        let (xs, ys) = (swapped_copy(&x)?, swapped_copy(&y)?);
        let mut twice = swapped_copy(&x)?;
        let raw_swapped = bytes_of(&twice);
        twice.byteswap()?;
        let same_values = xs.to_scalars()?.iter().zip(x.to_scalars()?).all(|(a, b)| a.bit_eq(b));
        let reversed: Vec<u8> = bytes_of(&x).chunks(d.size()).flat_map(|e| {
            let mut e = e.to_vec();
            if d.is_complex() {
                let h = e.len() / 2;
                e[..h].reverse();
                e[h..].reverse();
            } else {
                e.reverse();
            }
            e
        }).collect();
        if bytes_of(&twice) != bytes_of(&x) || !twice.byteorder().is_native() || !same_values || raw_swapped != reversed {
            involution_bad += 1;
        }
        for op in BinaryOp::ALL {
            if !op.supports(d) {
                continue;
            }
            let r1 = ops::binary(op, &x, &y, None, MathMode::Standard)?;
            let r2 = ops::binary(op, &xs, &ys, None, MathMode::Standard)?;
            let r3 = ops::binary(op, &xs, &y, None, MathMode::Standard)?;
            checked += 1;
            if bytes_of(&r1) != bytes_of(&r2) || bytes_of(&r1) != bytes_of(&r3) {
                wrong += 1;
                first = format!("{} {d}", op.name());
            }
        }
        for op in UnaryOp::ALL {
            let Ok(r1) = ops::unary(op, &x, None, MathMode::Standard) else { continue };
            let r2 = ops::unary(op, &xs, None, MathMode::Standard)?;
            checked += 1;
            if bytes_of(&r1) != bytes_of(&r2) {
                wrong += 1;
                first = format!("{} {d}", op.name());
            }
        }
    }
    v.check("ops on swapped operands", wrong == 0, format!("{checked} (op, dtype) pairs; {wrong} differ {first}"));
    v.check("byteswap twice is identity", involution_bad == 0, "all dtypes");
    Ok(v)
}

// ---------------------------------------------------------- math modes

fn crit_modes() -> Res<Verdict> {
    let mut v = Verdict::new();
    let m1 = Tensor::from_values(&[-1.0f64], &[], DType::Double, &cpu())?;
    let std = ops::unary(UnaryOp::SquareRoot, &m1, None, MathMode::Standard)?;
    v.check("standard gives NaN", std.dtype() == DType::Double && std.item()?.as_f64().is_nan(), "");
    let err = ops::unary(UnaryOp::SquareRoot, &m1, None, MathMode::Error);
    v.check("error mode rejects", matches!(&err, Err(e) if e.code() == ErrorCode::Kernel), "");
    let c = ops::unary(UnaryOp::SquareRoot, &m1, None, MathMode::Complex)?;
    v.check(
        "complex mode gives i",
        c.dtype() == DType::ComplexDouble && c.item()? == Scalar::Complex(0.0, 1.0),
        "",
    );
    status::set_warning_handler(Some(Arc::new(|_| {})));
    let w = ops::unary(UnaryOp::SquareRoot, &m1, None, MathMode::Warning)?;
    status::set_warning_handler(None);
    v.check("warning mode NaN", w.item()?.as_f64().is_nan(), "");

    let mut rng = StdRng::seed_from_u64(0xd0);
    let (mut cases, mut differ) = (0, 0);
    for op in UnaryOp::ALL {
        for d in [DType::Half, DType::Float, DType::Double, DType::ComplexFloat, DType::ComplexDouble] {
            if !op.supports(d) {
                continue;
            }
            let vals: Vec<Scalar> = (0..64)
                .map(|_| {
                    let x: f64 = match op {
                        UnaryOp::SquareRoot => rng.gen_range(0.0..10.0),
                        UnaryOp::Logarithm => rng.gen_range(1e-3..10.0),
                        UnaryOp::Arcsine | UnaryOp::Arccosine => rng.gen_range(-1.0..=1.0),
                        _ => rng.gen_range(-5.0..5.0),
                    };
                    if d.is_complex() {
                        Scalar::Complex(x, 0.0)
                    } else {
                        Scalar::Float(x)
                    }
                })
                .collect();
            let t = Tensor::from_values(&vals, &[64], d, &cpu())?;
            let base = ops::unary(op, &t, None, MathMode::Standard)?;
            for mode in [MathMode::Warning, MathMode::Error, MathMode::Complex] {
                let r = ops::unary(op, &t, None, mode)?;
                cases += 1;
                if r.dtype() != base.dtype() || bytes_of(&r) != bytes_of(&base) {
                    differ += 1;
                }
            }
        }
    }
    v.check("in-domain mode invariance", differ == 0, format!("{cases} (op, dtype, mode) cases"));
    Ok(v)
}

// ------------------------------------------------------------ dispatch

struct Instrumentation {
    counts: HashMap<(String, String), Arc<AtomicU64>>,
    start: HashMap<(String, String), u64>,
}

fn instrument() -> Instrumentation {
    let reg = dispatch::global();
    let mut counts = HashMap::new();
    let mut start = HashMap::new();
    for dt in reg.device_types(CORE) {
        for (op, n) in reg.call_counts(CORE, &dt) {
            let c = Arc::new(AtomicU64::new(0));
            let c2 = c.clone();
            let token = reg
                .override_op(CORE, &dt, &op, move |orig: Handle| -> Handle {
                    Arc::new(move |args| {
                        c2.fetch_add(1, Ordering::Relaxed);
                        orig(args)
                    })
                })
                .expect("op exists");
            // keep the override for the rest of the process
            std::mem::forget(token);
            counts.insert((dt.clone(), op.clone()), c);
            start.insert((dt.clone(), op), n);
        }
    }
    Instrumentation { counts, start }
}

fn counted(ins: &Instrumentation) -> BTreeMap<String, u64> {
    let mut m = BTreeMap::new();
    for ((dt, op), c) in &ins.counts {
        let n = c.load(Ordering::Relaxed);
        if n > 0 {
            m.insert(format!("{dt}/{op}"), n);
        }
    }
    m
}

fn crit_dispatch(ins: &Instrumentation) -> Res<Verdict> {
    let mut v = Verdict::new();
    let reg = dispatch::global();
    let missing_impl = reg.lookup(CORE, "accelerator", "add").err().map(|e| e.code());
    let missing_op = reg.lookup(CORE, "cpu", "no_such_op").err().map(|e| e.code());
    v.check(
        "distinct lookup errors",
        missing_impl == Some(ErrorCode::ImplNotLoaded) && missing_op == Some(ErrorCode::OpNotProvided),
        format!("{missing_impl:?} vs {missing_op:?}"),
    );

    // a short sequence with known dispatch counts
    let before = counted(ins);
    let a = Tensor::from_values(&[1.0f64, 2.0, 3.0], &[3], DType::Double, &cpu())?;
    let b = Tensor::from_values(&[1i64, 2, 3], &[3], DType::Int8, &cpu())?;
    let e = Tensor::from_values(&[1.0f64, 2.0, 3.0], &[3], DType::Double, &emu0())?;
    ops::add(&a, &a)?; // cpu/add
    ops::add(&a, &b)?; // cpu/convert + cpu/add
    ops::multiply(&e, &a)?.sync()?; // emu/convert + emu/multiply, counted when the job runs
    ops::sum(&a, None)?; // cpu/sum
    let after = counted(ins);
    let mut delta = BTreeMap::new();
    for (k, n) in &after {
        let d = n - before.get(k).copied().unwrap_or(0);
        if d > 0 {
            delta.insert(k.as_str(), d);
        }
    }
    let want: BTreeMap<&str, u64> =
        [("cpu/add", 2), ("cpu/convert", 1), ("emu/convert", 1), ("emu/multiply", 1), ("cpu/sum", 1)].into_iter().collect();
    v.check("known sequence counts", delta == want, format!("{delta:?}"));

    // override counters against the registry's own counters, whole run
    let mut total = 0;
    let mut mismatched = Vec::new();
    for ((dt, op), c) in &ins.counts {
        let seen = c.load(Ordering::Relaxed);
        let reg_delta = reg.call_count(CORE, dt, op)? - ins.start[&(dt.clone(), op.clone())];
        total += seen;
        if seen != reg_delta {
            mismatched.push(format!("{dt}/{op} {seen} vs {reg_delta}"));
        }
    }
    v.check("override counts every dispatch", mismatched.is_empty(), format!("{total} dispatches in the suite {}", mismatched.join(", ")));

    // remaining reductions, against direct folds
    let vals = [3.0f64, -1.5, 2.0, 0.5, 4.0, -2.0];
    let t = Tensor::from_values(&vals, &[2, 3], DType::Double, &cpu())?;
    let flags = Tensor::from_values(&[true, false, true, true], &[2, 2], DType::Bool, &cpu())?;
    let item = |r: Res<Tensor>| r.and_then(|t| t.item());
    let folds = item(ops::product(&t, None))? == Scalar::Float(vals.iter().product())
        && item(ops::reduce_minimum(&t, None))? == Scalar::Float(-2.0)
        && item(ops::reduce_maximum(&t, None))? == Scalar::Float(4.0)
        && ops::any(&flags, Some(&[0]))?.to_scalars()? == [Scalar::Bool(true), Scalar::Bool(true)]
        && ops::all(&flags, Some(&[0]))?.to_scalars()? == [Scalar::Bool(false), Scalar::Bool(true)];
    v.check("reductions", folds, "");

    let mut per_op: BTreeMap<&str, u64> = BTreeMap::new();
    for ((_, op), c) in &ins.counts {
        *per_op.entry(op.as_str()).or_default() += c.load(Ordering::Relaxed);
    }
    let unreached: Vec<&str> = per_op.iter().filter(|(_, &n)| n == 0).map(|(op, _)| *op).collect();
    v.check("every op dispatched", unreached.is_empty(), format!("{} ops {}", per_op.len(), unreached.join(", ")));

    let mut rng = StdRng::seed_from_u64(0xf1);
    let mut bad = 0;
    for _ in 0..200 {
        let n = rng.gen_range(1..=10);
        // random DAG: module i may depend on any j < i, registered in a
        // random topological order
        let deps: Vec<Vec<usize>> = (0..n).map(|i| (0..i).filter(|_| rng.gen_bool(0.3)).collect()).collect();
        let mut remaining: Vec<usize> = (0..n).collect();
        let mut loaded: Vec<bool> = vec![false; n];
        let r = ModuleRegistry::new();
        while !remaining.is_empty() {
            let ready: Vec<usize> = remaining.iter().copied().filter(|&m| deps[m].iter().all(|&d| loaded[d])).collect();
            let m = *ready.choose(&mut rng).unwrap();
            let names: Vec<String> = deps[m].iter().map(|d| format!("m{d}")).collect();
            let refs: Vec<&str> = names.iter().map(String::as_str).collect();
            r.register_module(&format!("m{m}"), &refs)?;
            loaded[m] = true;
            remaining.retain(|&x| x != m);
        }
        let order = r.finalize_all();
        let pos: HashMap<&str, usize> = order.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();
        let ok = order.len() == n
            && (0..n).all(|m| deps[m].iter().all(|d| pos[format!("m{m}").as_str()] < pos[format!("m{d}").as_str()]))
            && r.modules().is_empty();
        bad += usize::from(!ok);
    }
    v.check("finalization is reverse-topological", bad == 0, format!("{bad}/200 random graphs wrong"));
    Ok(v)
}

// ---------------------------------------------------------------- OTP1

fn crit_otp1() -> Res<Verdict> {
    let mut v = Verdict::new();
    let mut rng = StdRng::seed_from_u64(0x0701);
    let mut bad = Vec::new();
    for &d in &DTYPES {
        for big in [false, true] {
            let dims = [rng.gen_range(1..4), rng.gen_range(1..4), 2];
            let mut t = Tensor::new(&dims, d, &cpu())?;
            let raw: Vec<u8> = (0..t.storage().nbytes()).map(|_| rng.gen()).collect();
            t.storage().write_bytes(0, &raw)?;
            t.set_byteorder(if big { tidepool::ByteOrder::Big } else { tidepool::ByteOrder::Little })?;
            // a strided view isolates layout normalization from the byte check
            let view = t.permute(&[2, 0, 1])?;
            let first = interop::to_otp1_bytes(&view)?;
            let loaded = interop::from_otp1_bytes(&first)?;
            let second = interop::to_otp1_bytes(&loaded)?;
            let elementwise = loaded.dims() == view.dims()
                && loaded.byteorder() == view.byteorder()
                && col_major_indices(view.dims()).iter().all(|i| {
                    let (a, b) = (loaded.get(i).unwrap(), view.get(i).unwrap());
                    a.bit_eq(b)
                });
            if first != second || !elementwise || first[5] != u8::from(big) || first[4] != d.code() {
                bad.push(format!("{d}/{}", if big { "big" } else { "little" }));
            }
        }
    }
    v.check("30 round trips bit-identical", bad.is_empty(), bad.join(", "));

    let good = interop::to_otp1_bytes(&ops::arange(6, DType::Float, &cpu())?.reshape(&[2, 3])?)?;
    let expect_header = [0x4F, 0x54, 0x50, 0x01, 0x0A, 0x00, 0x02, 0x00, 2, 0, 0, 0, 0, 0, 0, 0, 3, 0, 0, 0, 0, 0, 0, 0];
    v.check("2x3 float header bytes", good[..24] == expect_header, "");
    let mutate = |f: &dyn Fn(&mut Vec<u8>)| {
        let mut b = good.clone();
        f(&mut b);
        interop::from_otp1_bytes(&b).err()
    };
    let cases: Vec<(&str, Option<Error>)> = vec![
        ("bad magic", mutate(&|b| b[3] = 0x02)),
        ("bad dtype", mutate(&|b| b[4] = 15)),
        ("bad byte order", mutate(&|b| b[5] = 2)),
        ("too many dims", mutate(&|b| b[6] = 9)),
        ("reserved", mutate(&|b| b[7] = 1)),
        ("truncated", mutate(&|b| b.truncate(b.len() - 1))),
        ("trailing", mutate(&|b| b.push(0))),
    ];
    let kinds: Vec<String> = cases
        .iter()
        .map(|(_, e)| match e {
            Some(Error::Format(f)) => format!("{:?}", std::mem::discriminant::<FormatError>(f)),
            other => format!("{other:?}"),
        })
        .collect();
    let all_format = cases.iter().all(|(_, e)| matches!(e, Some(Error::Format(_))));
    let mut uniq = kinds;
    uniq.sort();
    uniq.dedup();
    v.check(
        "malformed headers",
        all_format && uniq.len() == cases.len(),
        format!("{} distinct errors over {} cases", uniq.len(), cases.len()),
    );
    Ok(v)
}

// ---------------------------------------------------------- strict mode

fn is_strict(r: Res<Tensor>) -> bool {
    matches!(r, Err(e) if e.code() == ErrorCode::StrictMismatch)
}

fn is_strict_unit(r: Res<()>) -> bool {
    matches!(r, Err(e) if e.code() == ErrorCode::StrictMismatch)
}

fn crit_strict() -> Res<Verdict> {
    let mut v = Verdict::new();
    let i8s = Tensor::from_values(&[1i64, 2, 3], &[3], DType::Int8, &cpu())?;
    let f32s = Tensor::from_values(&[1.0f64, 2.0, 3.0], &[3], DType::Float, &cpu())?;
    let f32e = Tensor::from_values(&[1.0f64, 2.0, 3.0], &[3], DType::Float, &emu0())?;
    let neg = Tensor::from_values(&[-1.0f64], &[1], DType::Double, &cpu())?;
    let m = Tensor::from_values(&[1.0f64, 0.0, 0.0, 1.0], &[2, 2], DType::Double, &cpu())?;
    let mf = Tensor::from_values(&[1.0f64, 0.0, 0.0, 1.0], &[2, 2], DType::Float, &cpu())?;
    let col = IndexExpr::new(vec![IndexAtom::Colon])?;
    let pick = IndexExpr::new(vec![IndexAtom::Array(IndexArray::one_d(vec![0, 2]))])?;
    let two_f64 = Tensor::from_values(&[5.0f64, 6.0], &[2], DType::Double, &cpu())?;
    let foreign = interop::convert_to(&f32s, "otp1-blob", false)?;

    let sites: Vec<(&str, Box<dyn Fn() -> bool>)> = vec![
        ("binary dtype", Box::new(|| is_strict(ops::add(&i8s, &f32s)))),
        ("binary device", Box::new(|| is_strict(ops::add(&f32s, &f32e)))),
        ("foreign operand", Box::new(|| is_strict(ops::add(&i8s, &foreign)))),
        ("integer to float function", Box::new(|| is_strict(ops::square_root(&i8s)))),
        ("complex widening", Box::new(|| is_strict(ops::unary(UnaryOp::SquareRoot, &neg, None, MathMode::Complex)))),
        ("reduce to bool", Box::new(|| is_strict(ops::any(&f32s, None)))),
        ("matmul", Box::new(|| is_strict(ops::matmul(&m, &mf, None)))),
        ("copy", Box::new(|| is_strict_unit(ops::copy(&i8s, &f32s)))),
        ("destination dtype", Box::new(|| is_strict(ops::binary(BinaryOp::Add, &f32s, &f32s, Some(&ops::zeros(&[3], DType::Double, &cpu()).unwrap()), MathMode::Standard)))),
        ("in-place device", Box::new(|| is_strict_unit(ops::binary_assign(BinaryOp::Add, &f32s, &f32e)))),
        ("view assignment", Box::new(|| is_strict_unit(f32s.assign(&col, &i8s)))),
        ("gather assignment", Box::new(|| is_strict_unit(f32s.assign(&pick, &two_f64)))),
        ("mixed qr", Box::new(|| {
            let cfg = QrConfig { dtype_r: DType::Float, device_r: emu0(), ..QrConfig::default() };
            matches!(qr::run(&cfg), Err(e) if e.code() == ErrorCode::StrictMismatch)
        })),
    ];
    {
        let _g = CastingGuard::set(false);
        let failed: Vec<&str> = sites.iter().filter(|(_, f)| !f()).map(|(n, _)| *n).collect();
        v.check("every cast site errors", failed.is_empty(), format!("{} sites {}", sites.len(), failed.join(", ")));
        let explicit = ops::cast(&i8s, Some(DType::Float), Some(&emu0())).is_ok()
            && ops::ensure(&i8s, Some(DType::Double), None).is_ok()
            && ops::ensure(&f32s, Some(DType::Float), Some(&cpu())).is_ok();
        v.check("cast and ensure", explicit, "");
        let scalars = ops::multiply(&f32s, 2.5).is_ok() && ops::add(&i8s, 1).is_ok();
        v.check("host scalars", scalars, "");
    }
    let guard = CastingGuard::set(true);
    let dst = f32s.clone();
    let allowed = ops::add(&i8s, &f32s).is_ok()
        && ops::add(&f32s, &f32e).is_ok()
        && ops::copy(&i8s, &dst).is_ok()
        && ops::matmul(&m, &mf, None).is_ok();
    drop(guard);
    v.check("allowed with casting on", allowed, "");
    Ok(v)
}

// ---------------------------------------------------------------- main

fn main() -> ExitCode {
    let started = Instant::now();
    let ins = instrument();
    let criteria: Vec<(&str, Box<dyn Fn() -> Res<Verdict>>)> = vec![
        ("qr-double", Box::new(crit_qr_double)),
        ("qr-mixed", Box::new(crit_qr_mixed)),
        ("promotion-lattice", Box::new(crit_promotion)),
        ("indexing-equivalence", Box::new(crit_indexing)),
        ("overlap-safety", Box::new(crit_overlap)),
        ("canonicalization", Box::new(crit_canonical)),
        ("byte-order", Box::new(crit_byteorder)),
        ("math-modes", Box::new(crit_modes)),
        ("otp1", Box::new(crit_otp1)),
        ("strict-mode", Box::new(crit_strict)),
        ("dispatch", Box::new(move || crit_dispatch(&ins))),
    ];
    let mut unexpected = 0;
    for (name, f) in &criteria {
        let t0 = Instant::now();
        match f() {
            Ok(v) => {
                let known = !v.pass && v.failed.iter().all(|f| KNOWN_LIMITATIONS.contains(f));
                println!(
                    "{} {name} [{:.2}s]: {}{}",
                    if v.pass { "PASS" } else { "FAIL" },
                    t0.elapsed().as_secs_f64(),
                    v.detail,
                    if known { " (known limitation)" } else { "" }
                );
                if !v.pass && !known {
                    unexpected += 1;
                }
            }
            Err(e) => {
                println!("FAIL {name}: error {e}");
                unexpected += 1;
            }
        }
    }
    println!("acceptance finished in {:.2}s; {unexpected} unexpected failure(s)", started.elapsed().as_secs_f64());
    if unexpected == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
