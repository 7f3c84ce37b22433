//! The `tidepool` command-line tool.

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};

use tidepool_core::kernels::{self, BinaryOp};
use tidepool_core::plan::Plan;
use tidepool_core::{ByteOrder, DType, MathMode};

use crate::devices;
use crate::dispatch;
use crate::error::{Error, ErrorCode, Result};
use crate::interop;
use crate::ops;
use crate::qr::{self, QrConfig, Variant};
use crate::status::set_implicit_casting;
use crate::tensor::Tensor;

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_IO: i32 = 3;
pub const EXIT_FORMAT: i32 = 4;

#[derive(Debug, Parser)]
#[command(name = "tidepool", version, about = "Dense strided tensors on cpu and emulated devices")]
pub struct Cli {
    /// Number of emulated devices (overrides TIDEPOOL_EMU_DEVICES).
    #[arg(long, global = true)]
    pub devices: Option<usize>,
    /// Disable implicit casting.
    #[arg(long, global = true)]
    pub strict: bool,
    /// Behavior of domain-sensitive functions.
    #[arg(long, global = true, value_enum, default_value_t = ModeArg::Standard)]
    pub mode: ModeArg,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Standard,
    Warning,
    Error,
    Complex,
}

impl From<ModeArg> for MathMode {
    fn from(m: ModeArg) -> MathMode {
        match m {
            ModeArg::Standard => MathMode::Standard,
            ModeArg::Warning => MathMode::Warning,
            ModeArg::Error => MathMode::Error,
            ModeArg::Complex => MathMode::Complex,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum VariantArg {
    Column,
    Rank1,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OrderArg {
    Little,
    Big,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// List devices, properties, modules and buffer settings.
    Info,
    /// Factorize the 5x5 demo matrix with modified Gram-Schmidt.
    Qr {
        #[arg(long, value_enum, default_value_t = VariantArg::Column)]
        variant: VariantArg,
        /// Device of Q.
        #[arg(long, default_value = "cpu")]
        device: String,
        /// Dtype of Q.
        #[arg(long, default_value = "double")]
        dtype: String,
        #[arg(long, default_value = "cpu")]
        device_r: String,
        #[arg(long, default_value = "double")]
        dtype_r: String,
        /// Store Q in non-native byte order.
        #[arg(long)]
        byteswap_q: bool,
    },
    /// Time canonical-plan against naive-loop elementwise kernels.
    Bench {
        /// Element counts.
        #[arg(long, value_delimiter = ',', default_values_t = [1usize << 20])]
        sizes: Vec<usize>,
        #[arg(long, default_value_t = 5)]
        reps: usize,
    },
    /// Re-type or re-order an .otp file.
    Convert {
        input: PathBuf,
        output: PathBuf,
        #[arg(long)]
        dtype: Option<String>,
        #[arg(long, value_enum)]
        byteorder: Option<OrderArg>,
    },
    /// Print the tensor in an .otp file.
    Print {
        input: PathBuf,
        /// Apply square_root (in the selected mode) before printing.
        #[arg(long)]
        sqrt: bool,
    },
}

fn parse_dtype(s: &str) -> Result<DType> {
    s.parse().map_err(|_| Error::InvalidArgument(format!("unknown dtype {s}")))
}

/// Exit status for an error.
pub fn exit_code(e: &Error) -> i32 {
    match e.code() {
        ErrorCode::Io => EXIT_IO,
        ErrorCode::Format => EXIT_FORMAT,
        _ => EXIT_FAILURE,
    }
}

/// Parse `args` (including the program name), run, and return the exit
/// status. Output goes to `out`, diagnostics to `err`.
pub fn main_with<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let text = e.render().to_string();
            if code == EXIT_OK {
                let _ = write!(out, "{text}");
            } else {
                let _ = write!(err, "{text}");
            }
            return code;
        }
    };
    match run(&cli, out) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(err, "tidepool: {e}");
            exit_code(&e)
        }
    }
}

pub fn run(cli: &Cli, out: &mut dyn Write) -> Result<()> {
    if let Some(n) = cli.devices {
        devices::configure(n)?;
    }
    set_implicit_casting(!cli.strict);
    let mode = MathMode::from(cli.mode);
    match &cli.command {
        Command::Info => info(out),
        Command::Qr { variant, device, dtype, device_r, dtype_r, byteswap_q } => {
            let cfg = QrConfig {
                variant: if *variant == VariantArg::Column { Variant::Column } else { Variant::RankOne },
                dtype_q: parse_dtype(dtype)?,
                device_q: devices::device(device)?,
                dtype_r: parse_dtype(dtype_r)?,
                device_r: devices::device(device_r)?,
                byteswap_q: *byteswap_q,
            };
            let rep = qr::run(&cfg)?;
            writeln!(out, "{rep}")?;
            Ok(())
        }
        Command::Bench { sizes, reps } => bench(sizes, *reps, out),
        Command::Convert { input, output, dtype, byteorder } => {
            let t = interop::load_file(input)?;
            let dtype = dtype.as_deref().map(parse_dtype).transpose()?;
            let order = byteorder.map(|o| match o {
                OrderArg::Little => ByteOrder::Little,
                OrderArg::Big => ByteOrder::Big,
            });
            let c = interop::retype(&t, dtype, order)?;
            interop::save_file(&c, output)?;
            writeln!(out, "wrote {} ({}, {})", output.display(), c.dtype(), c.byteorder())?;
            Ok(())
        }
        Command::Print { input, sqrt } => {
            let mut t = interop::load_file(input)?;
            if *sqrt {
                t = ops::unary(kernels::UnaryOp::SquareRoot, &t, None, mode)?;
            }
            writeln!(out, "{t}")?;
            Ok(())
        }
    }
}

fn info(out: &mut dyn Write) -> Result<()> {
    writeln!(out, "devices:")?;
    for d in devices::list_devices() {
        writeln!(out, "  {d} ({})", d.device_type().name)?;
        for (k, v) in d.properties() {
            writeln!(out, "    {k}: {v}")?;
        }
        let (count, max_bytes) = d.buffer_config();
        writeln!(out, "    intermediate buffers: {count} x {max_bytes} bytes")?;
    }
    let reg = dispatch::global();
    writeln!(out, "modules:")?;
    for m in reg.modules() {
        let deps = if m.dependencies.is_empty() { String::new() } else { format!(" (needs {})", m.dependencies.join(", ")) };
        writeln!(out, "  {}{deps}: {}", m.name, reg.device_types(&m.name).join(", "))?;
        for dt in reg.device_types(&m.name) {
            let called: Vec<String> =
                reg.call_counts(&m.name, &dt).into_iter().filter(|(_, n)| *n > 0).map(|(op, n)| format!("{op}={n}")).collect();
            if !called.is_empty() {
                writeln!(out, "    {dt} calls: {}", called.join(" "))?;
            }
        }
    }
    writeln!(out, "external types: {}", interop::registered_types().join(", "))?;
    Ok(())
}

fn bench(sizes: &[usize], reps: usize, out: &mut dyn Write) -> Result<()> {
    writeln!(out, "data: arange (deterministic)")?;
    writeln!(out, "{:>10} {:>12} {:>12} {:>8}", "elements", "canonical_s", "naive_s", "equal")?;
    let cpu = devices::cpu();
    for &n in sizes {
        let rows = 1usize << (n.trailing_zeros() / 2).min(12);
        let cols = n / rows;
        let base = ops::arange(rows * cols, DType::Double, &cpu)?.reshape(&[rows, cols])?;
        // transposed operand: the innermost loop of a naive walk strides
        let a = base.t();
        let b = ops::cast(&a, None, None)?;
        let (canonical, r1) = time_add(&a, &b, reps, true)?;
        let (naive, r2) = time_add(&a, &b, reps, false)?;
        let equal = r1.storage().to_bytes()? == r2.storage().to_bytes()?;
        writeln!(out, "{:>10} {:>12.6} {:>12.6} {:>8}", rows * cols, canonical, naive, equal)?;
    }
    Ok(())
}

fn time_add(a: &Tensor, b: &Tensor, reps: usize, canonical: bool) -> Result<(f64, Tensor)> {
    let out = Tensor::new(a.dims(), a.dtype(), a.device())?;
    let layouts = [out.layout(), a.layout(), b.layout()];
    let plan = if canonical { Plan::canonical(&layouts) } else { Plan::naive(&layouts) };
    let mut best = f64::INFINITY;
    for _ in 0..reps.max(1) {
        let t0 = Instant::now();
        kernels::binary(BinaryOp::Add, &plan, &out.operand(), &a.operand(), &b.operand(), MathMode::Standard)?;
        best = best.min(t0.elapsed().as_secs_f64());
    }
    Ok((best, out))
}
