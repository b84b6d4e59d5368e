//! Command-line front end. Everything prints JSON (or CSV for the grid) to
//! the given writer; errors map to exit codes through [`Error::exit_code`].

use std::ffi::OsString;
use std::fs;
use std::io::{Read, Write};
use std::str::FromStr;

use clap::{Args, CommandFactory, FromArgMatches, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use crate::adjust::{adjust, builtin, named_measure, Adjustment, MaxSpec, NamedMeasure};
use crate::error::{Error, Result};
use crate::indices::{Builtin, IndexRef, LinearMember};
use crate::nullmodels::{expectation, variance, EstimateConfig, McConfig, Method, NullModel, DEFAULT_SAMPLES};
use crate::properties::{
    check_constancy, check_idempotency, check_linear_equivalence, check_mean_zero, check_nested_collapse,
    check_variance_one, CheckConfig, PropertyReport, SecondMax, DEFAULT_TOLERANCE,
};
use crate::report::{adjustment_json, estimate_json, to_json};
use crate::repro::{asymptotic_check, figure1_grid, plot_script, prop1_record, write_grid_csv, Part};
use crate::scalar::{parse_rational, Rational, Scalar};
use crate::tables::{table_from_labels, ContingencyTable, DEFAULT_BUDGET};

#[derive(Debug, Parser)]
#[command(name = "chance-adjust", version, about = "Generalized chance adjustment of similarity indices")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Evaluate a named adjusted measure (kappa, ARI, ...).
    Compute {
        /// Named measure identifier (listed below).
        #[arg(long)]
        measure: String,
        #[command(flatten)]
        input: TableInput,
        #[command(flatten)]
        opts: EngineOpts,
    },
    /// Adjust an index under a null model and maximum.
    Adjust {
        #[command(flatten)]
        spec: AdjustSpec,
        #[command(flatten)]
        input: TableInput,
        #[command(flatten)]
        opts: EngineOpts,
    },
    /// Null expectation (and variance) of an index.
    Expect {
        /// Index identifier (listed below).
        #[arg(long)]
        index: String,
        /// Null model identifier (listed below).
        #[arg(long, default_value = "perm")]
        model: String,
        #[command(flatten)]
        input: TableInput,
        #[command(flatten)]
        opts: EngineOpts,
    },
    /// Check a property of the adjusted index at a table.
    Check {
        #[arg(long, value_enum)]
        property: Property,
        #[command(flatten)]
        spec: AdjustSpec,
        /// Second-stage maximum for idempotency: derived, or any --max value.
        #[arg(long, default_value = "derived")]
        second_max: String,
        /// Absolute tolerance in double precision (ignored with --exact).
        #[arg(long, default_value_t = DEFAULT_TOLERANCE)]
        tolerance: f64,
        #[command(flatten)]
        input: TableInput,
        #[command(flatten)]
        opts: EngineOpts,
    },
    /// Reproduce the toy counterexamples and their figures.
    #[command(subcommand)]
    Repro(Repro),
    /// List index, model, maximum and measure identifiers.
    List,
}

#[derive(Debug, Subcommand)]
enum Repro {
    /// Closed-form record for one part (1-5) of the toy counterexample.
    Prop1 {
        #[arg(long)]
        part: u8,
        #[arg(long)]
        u1: u64,
        #[arg(long)]
        n: u64,
        #[arg(long, default_value = "0", allow_hyphen_values = true)]
        c: String,
        /// Exact rational arithmetic.
        #[arg(long)]
        exact: bool,
    },
    /// Grid of -log10|AS - A^2 S| as CSV.
    Figure1 {
        #[arg(long, default_value_t = 100)]
        n_max: u64,
        /// Comma-separated convention values.
        #[arg(long, default_value = "0,1,-1", allow_hyphen_values = true)]
        c: String,
        /// Write the CSV here instead of standard output.
        #[arg(long)]
        out: Option<String>,
        #[arg(long, value_enum, default_value = "csv")]
        format: GridFormat,
        /// Also write a matplotlib script rendering the CSV.
        #[arg(long)]
        plot_script: Option<String>,
    },
    /// Ratio (1/N) A^2 S / AS at u1 = N - j against its large-N limit.
    Asymptotic {
        #[arg(long, default_value_t = 1)]
        j: u64,
        #[arg(long, default_value = "1", allow_hyphen_values = true)]
        c: f64,
        /// One or more N values (comma-separated).
        #[arg(long, default_value = "100,300,1000")]
        n: String,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum GridFormat {
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Property {
    Constancy,
    MeanZero,
    VarianceOne,
    Idempotent,
    NestedCollapse,
    LinearEquiv,
}

#[derive(Debug, Args)]
struct AdjustSpec {
    /// Index identifier (listed below).
    #[arg(long)]
    index: String,
    /// Null model identifier (listed below).
    #[arg(long, default_value = "perm")]
    model: String,
    /// Maximum rule (listed below).
    #[arg(long, default_value = "domain")]
    max: String,
}

#[derive(Debug, Args)]
struct TableInput {
    /// Contingency table as CSV of non-negative integers ('-' for stdin).
    #[arg(long, conflicts_with = "labels")]
    table: Option<String>,
    /// Two-column CSV of paired labels, one observation per line.
    #[arg(long)]
    labels: Option<String>,
    /// The first CSV line is a header.
    #[arg(long)]
    header: bool,
    /// Pad the table to this many rows.
    #[arg(long)]
    rows: Option<usize>,
    /// Pad the table to this many columns.
    #[arg(long)]
    cols: Option<usize>,
    /// Toy table [[u1],[N-u1]] (requires --n).
    #[arg(long, requires = "n", conflicts_with_all = ["table", "labels"])]
    u1: Option<u64>,
    /// Total N for the toy table.
    #[arg(long, requires = "u1")]
    n: Option<u64>,
}

#[derive(Debug, Args)]
struct EngineOpts {
    /// Value of the adjusted index when the maximum equals the expectation.
    #[arg(long, alias = "c", default_value = "0", allow_hyphen_values = true)]
    convention: String,
    /// auto, closed-form, enumeration or monte-carlo.
    #[arg(long, default_value = "auto")]
    method: String,
    /// Monte Carlo draws.
    #[arg(long, default_value_t = DEFAULT_SAMPLES)]
    samples: usize,
    /// Seed for Monte Carlo; required whenever sampling may be used.
    #[arg(long)]
    seed: Option<u64>,
    /// Independent random streams (results do not depend on thread count).
    #[arg(long, default_value_t = 8)]
    streams: usize,
    /// Exact rational arithmetic.
    #[arg(long)]
    exact: bool,
    /// Largest number of tables to enumerate.
    #[arg(long, default_value_t = DEFAULT_BUDGET)]
    budget: usize,
}

impl EngineOpts {
    fn config(&self) -> Result<EstimateConfig> {
        let method = Method::from_str(&self.method)?;
        if self.samples == 0 || self.streams == 0 {
            return Err(Error::input("--samples and --streams must be positive"));
        }
        let mc = self.seed.map(|seed| McConfig {
            samples: self.samples,
            seed,
            streams: self.streams,
        });
        if method == Method::MonteCarlo && mc.is_none() {
            return Err(Error::input("Monte Carlo needs an explicit --seed"));
        }
        if method == Method::MonteCarlo && self.exact {
            return Err(Error::capability("Monte Carlo cannot produce exact results"));
        }
        Ok(EstimateConfig {
            method,
            mc,
            budget: self.budget,
        })
    }

    fn convention(&self) -> Result<Rational> {
        parse_rational(&self.convention)
    }
}

fn read_source(path: &str) -> Result<String> {
    if path == "-" {
        let mut s = String::new();
        std::io::stdin()
            .read_to_string(&mut s)
            .map_err(|e| Error::Io { path: "<stdin>".into(), source: e })?;
        Ok(s)
    } else {
        fs::read_to_string(path).map_err(|e| Error::Io { path: path.into(), source: e })
    }
}

fn csv_records(text: &str, header: bool) -> Result<Vec<csv::StringRecord>> {
    csv::ReaderBuilder::new()
        .has_headers(header)
        .flexible(true)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(text.as_bytes())
        .records()
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| Error::Input(format!("malformed CSV: {e}")))
}

/// Parses a table CSV; errors name the offending 1-based cell.
pub fn parse_table_csv(text: &str, header: bool) -> Result<ContingencyTable> {
    let mut rows = Vec::new();
    for (i, rec) in csv_records(text, header)?.iter().enumerate() {
        let row = rec
            .iter()
            .enumerate()
            .map(|(j, cell)| {
                cell.parse::<u64>().map_err(|_| {
                    Error::Input(format!(
                        "cell ({}, {}) = '{cell}' is not a non-negative integer",
                        i + 1,
                        j + 1
                    ))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    ContingencyTable::new(rows)
}

/// Parses two-column paired labels into a table.
pub fn parse_labels_csv(text: &str, header: bool) -> Result<ContingencyTable> {
    let mut x = Vec::new();
    let mut y = Vec::new();
    for (i, rec) in csv_records(text, header)?.iter().enumerate() {
        if rec.len() != 2 {
            return Err(Error::Input(format!(
                "line {} has {} fields; expected two labels",
                i + 1,
                rec.len()
            )));
        }
        x.push(rec[0].to_string());
        y.push(rec[1].to_string());
    }
    table_from_labels(&x, &y)
}

impl TableInput {
    fn load(&self) -> Result<ContingencyTable> {
        let t = match (&self.table, &self.labels, self.u1, self.n) {
            (Some(p), None, None, None) => parse_table_csv(&read_source(p)?, self.header)?,
            (None, Some(p), None, None) => parse_labels_csv(&read_source(p)?, self.header)?,
            (None, None, Some(u1), Some(n)) => ContingencyTable::first_margin(u1, n)?,
            _ => return Err(Error::input("give exactly one of --table, --labels or --u1/--n")),
        };
        match (self.rows, self.cols) {
            (None, None) => Ok(t),
            (r, c) => {
                let (rows, cols) = (r.unwrap_or(t.nrows()), c.unwrap_or(t.ncols()));
                t.with_shape(rows, cols)
            }
        }
    }
}

fn index_ref(name: &str) -> Result<IndexRef> {
    Ok(builtin(Builtin::from_str(name)?))
}

fn adjustment(spec: &AdjustSpec, opts: &EngineOpts) -> Result<Adjustment> {
    Ok(Adjustment::new(NullModel::from_str(&spec.model)?, MaxSpec::from_str(&spec.max)?)
        .convention(opts.convention()?)
        .estimate(opts.config()?))
}

fn with_seed(mut v: Value, opts: &EngineOpts) -> Value {
    if let Value::Object(m) = &mut v {
        if !m.contains_key("seed") {
            m.insert("seed".into(), opts.seed.map(|s| json!(s)).unwrap_or(Value::Null));
        }
    }
    v
}

fn run_adjust<S: Scalar>(index: &str, spec: &AdjustSpec, t: &ContingencyTable, opts: &EngineOpts) -> Result<Value> {
    let adj = adjustment(spec, opts)?;
    let r = adjust::<S>(index_ref(index)?.as_ref(), &adj, t)?;
    Ok(adjustment_json(&r))
}

fn run_compute<S: Scalar>(measure: &str, t: &ContingencyTable, opts: &EngineOpts) -> Result<Value> {
    let m = NamedMeasure::from_str(measure)?;
    let r = named_measure::<S>(m, t, opts.convention()?, opts.config()?)?;
    let mut v = adjustment_json(&r);
    if let Value::Object(map) = &mut v {
        map.insert("measure".into(), json!(m.describe()));
    }
    Ok(v)
}

fn run_expect<S: Scalar>(index: &str, model: &str, t: &ContingencyTable, opts: &EngineOpts) -> Result<Value> {
    let model = NullModel::from_str(model)?;
    let index = index_ref(index)?;
    let cfg = opts.config()?;
    let e = expectation::<S>(model, t, index.as_ref(), &cfg)?;
    let v = variance::<S>(model, t, index.as_ref(), &cfg)?;
    Ok(with_seed(
        json!({
            "index": index.id(),
            "model": model.as_str(),
            "expected": estimate_json(&e),
            "variance": estimate_json(&v),
        }),
        opts,
    ))
}

fn run_check<S: Scalar>(
    property: Property,
    spec: &AdjustSpec,
    second_max: &str,
    tolerance: f64,
    t: &ContingencyTable,
    opts: &EngineOpts,
) -> Result<PropertyReport> {
    let adj = adjustment(spec, opts)?;
    let cfg = CheckConfig { tolerance };
    match property {
        Property::Constancy => check_constancy::<S>(index_ref(&spec.index)?.as_ref(), &adj, t, &cfg),
        Property::MeanZero => check_mean_zero::<S>(index_ref(&spec.index)?, &adj, t, &cfg),
        Property::VarianceOne => check_variance_one::<S>(index_ref(&spec.index)?, &adj, t, &cfg),
        Property::Idempotent => {
            let second = SecondMax::from_str(second_max)?;
            check_idempotency::<S>(index_ref(&spec.index)?, &adj, &second, t, &cfg)
        }
        Property::NestedCollapse => check_nested_collapse::<S>(index_ref(&spec.index)?, &adj, t, &cfg),
        Property::LinearEquiv => {
            let member = match Builtin::from_str(&spec.index)? {
                Builtin::Rand => LinearMember::rand_over_q(),
                other => {
                    return Err(Error::Unsupported(format!(
                        "linear-equiv needs an index with a known affine relation; '{other}' has none (try rand)"
                    )))
                }
            };
            check_linear_equivalence::<S>(&member, &adj, t, &cfg)
        }
    }
}

fn parse_list<T: FromStr>(s: &str, what: &str) -> Result<Vec<T>> {
    s.split(',')
        .map(|p| {
            p.trim()
                .parse()
                .map_err(|_| Error::Input(format!("cannot parse '{p}' as {what}")))
        })
        .collect()
}

fn run_repro(cmd: &Repro, out: &mut dyn Write) -> Result<()> {
    match cmd {
        Repro::Prop1 { part, u1, n, c, exact } => {
            let part = Part::from_number(*part)?;
            let c = parse_rational(c)?;
            let record = if *exact {
                prop1_record::<Rational>(part, *u1, *n, &c)?
            } else {
                prop1_record::<f64>(part, *u1, *n, &Scalar::to_f64(&c))?
            };
            emit(out, &to_json(&record)?)
        }
        Repro::Figure1 { n_max, c, out: path, format, plot_script: script } => {
            let cs: Vec<f64> = parse_list(c, "a convention value")?;
            let cells = figure1_grid(*n_max, &cs)?;
            let mut buf = Vec::new();
            match format {
                GridFormat::Csv => write_grid_csv(&cells, &mut buf)?,
                GridFormat::Json => buf = to_json(&cells)?.into_bytes(),
            }
            match path {
                Some(p) => fs::write(p, &buf).map_err(|e| Error::Io { path: p.into(), source: e })?,
                None => out
                    .write_all(&buf)
                    .map_err(|e| Error::Io { path: "<stdout>".into(), source: e })?,
            }
            if let Some(sp) = script {
                let csv_path = path.as_deref().unwrap_or("figure1.csv");
                fs::write(sp, plot_script(csv_path)).map_err(|e| Error::Io { path: sp.into(), source: e })?;
            }
            Ok(())
        }
        Repro::Asymptotic { j, c, n } => {
            let ns: Vec<u64> = parse_list(n, "N")?;
            let results = ns
                .iter()
                .map(|&n| asymptotic_check(*j, *c, n))
                .collect::<Result<Vec<_>>>()?;
            emit(out, &to_json(&results)?)
        }
    }
}

fn emit(out: &mut dyn Write, s: &str) -> Result<()> {
    out.write_all(s.as_bytes())
        .map_err(|e| Error::Io { path: "<stdout>".into(), source: e })
}

fn identifier_help() -> String {
    let mut s = String::from("Indices:\n");
    for b in Builtin::ALL {
        s += &format!("  {:<16} {}\n", b.as_str(), b.describe());
    }
    s += "\nNull models:\n";
    for m in [NullModel::Perm, NullModel::Ind2, NullModel::Ind1, NullModel::FixedUniform] {
        s += &format!("  {:<16} {}\n", m.as_str(), m.conditioning());
    }
    s += "\nMaxima (--max):\n";
    for (id, what) in [
        ("domain", "largest index value over all tables with the same N and shape"),
        ("model", "largest index value over the null support"),
        ("pair-mean", "(q(u) + q(v)) / 2"),
        ("pair-min", "min(q(u), q(v))"),
        ("standardize", "null mean plus null standard deviation"),
        ("fixed:V", "the constant V"),
    ] {
        s += &format!("  {id:<16} {what}\n");
    }
    s += "\nNamed measures (compute --measure):\n";
    for m in NamedMeasure::ALL {
        s += &format!("  {:<20} {}\n", m.id(), m.describe());
    }
    s
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I, out: &mut dyn Write) -> Result<()>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let help = identifier_help();
    let mut cmd = Cli::command().after_help(help.clone());
    for name in ["compute", "adjust", "expect", "check", "list"] {
        cmd = cmd.mut_subcommand(name, |sub| sub.after_help(help.clone()));
    }
    let matches = cmd
        .try_get_matches_from(args)
        .map_err(ClapExit)?;
    let cli = Cli::from_arg_matches(&matches).map_err(ClapExit)?;
    dispatch(cli.command, &help, out)
}

/// Wrapper so clap's own help/usage output surfaces through [`Error`].
struct ClapExit(clap::Error);

impl From<ClapExit> for Error {
    fn from(e: ClapExit) -> Self {
        Error::Cli(e.0)
    }
}

fn dispatch(cmd: Command, help: &str, out: &mut dyn Write) -> Result<()> {
    macro_rules! numeric {
        ($opts:expr, $f:ident ( $($arg:expr),* )) => {
            if $opts.exact { $f::<Rational>($($arg),*) } else { $f::<f64>($($arg),*) }
        };
    }
    let value = match &cmd {
        Command::Compute { measure, input, opts } => {
            let t = input.load()?;
            with_seed(numeric!(opts, run_compute(measure, &t, opts))?, opts)
        }
        Command::Adjust { spec, input, opts } => {
            let t = input.load()?;
            numeric!(opts, run_adjust(&spec.index, spec, &t, opts))?
        }
        Command::Expect { index, model, input, opts } => {
            let t = input.load()?;
            numeric!(opts, run_expect(index, model, &t, opts))?
        }
        Command::Check { property, spec, second_max, tolerance, input, opts } => {
            let t = input.load()?;
            let report = numeric!(opts, run_check(*property, spec, second_max, *tolerance, &t, opts))?;
            let mut v = serde_json::to_value(&report).map_err(|e| Error::Input(e.to_string()))?;
            if let Value::Object(m) = &mut v {
                m.insert("index".into(), json!(spec.index));
                m.insert("model".into(), json!(spec.model));
                m.insert("max_spec".into(), json!(MaxSpec::from_str(&spec.max)?.id()));
            }
            with_seed(v, opts)
        }
        Command::Repro(r) => return run_repro(r, out),
        Command::List => return emit(out, help),
    };
    emit(out, &to_json(&value)?)
}

/// Entry point for the binary: runs and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let stdout = std::io::stdout();
    let mut lock = stdout.lock();
    match run(args, &mut lock) {
        Ok(()) => 0,
        Err(Error::Cli(e)) => {
            let _ = e.print();
            e.exit_code()
        }
        Err(e) => {
            let _ = writeln!(std::io::stderr(), "error: {e}");
            e.exit_code()
        }
    }
}
