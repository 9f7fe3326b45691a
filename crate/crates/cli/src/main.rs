//! Command-line front end: reproduces the guarantee table and figure data,
//! solves worst-case equilibrium programs for concrete mechanisms, and
//! exposes the signal bound and the triangle-prior upper bound.
//!
//! Exit codes: 0 success, 2 usage error, 3 numeric non-convergence,
//! 4 resource cap exceeded.

mod util;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use revguard::bce::{self, value_grid};
use revguard::guarantee::{self, GuaranteeResult, SearchConfig};
use revguard::mechanism::{FiniteMechanism, MechanismFile};
use revguard::prior::{ContinuousPrior, DiscretePrior, Prior};

use util::{
    cells_from_nu, emit, fail, parse_kv, parse_prior, require_continuous, to_json, EXIT_NO_CONVERGENCE,
    EXIT_SIZE_CAP, EXIT_USAGE,
};

#[derive(Parser)]
#[command(name = "revguard", version, about = "Worst-case revenue guarantees for common-value sale mechanisms")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Revenue guarantee of the exponential price mechanism (or its
    /// generalized two-buyer variant) for a prior
    Guarantee(GuaranteeArgs),
    /// Guarantee table across the built-in priors, as CSV
    Table(TableArgs),
    /// Guarantee as a function of the number of buyers, as CSV
    Figure(FigureArgs),
    /// Worst-case equilibrium revenue of a concrete mechanism, with the
    /// dual bound and certificates
    Lp(LpArgs),
    /// Buyer-optimal signal bound for a continuous prior
    Rs(RsArgs),
    /// Wallet-game upper bound beside the triangle-prior guarantees
    TriangleBound(TriangleBoundArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Variant {
    /// Exponential price mechanism
    Star,
    /// Generalized two-buyer mechanism
    Sharp2,
}

#[derive(Args)]
struct GuaranteeArgs {
    /// Prior: uniform | beta:b,c | powercdf:h | concavecdf | triangle | file:PATH
    #[arg(long)]
    prior: String,
    #[arg(long, default_value_t = 1)]
    buyers: usize,
    #[arg(long, value_enum, default_value_t = Variant::Star)]
    variant: Variant,
    /// Grid step for discretizing continuous priors (1/n)
    #[arg(long)]
    nu: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct TableArgs {
    #[arg(long)]
    nu: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct FigureArgs {
    #[arg(long, default_value = "uniform")]
    prior: String,
    #[arg(long, default_value_t = 20)]
    max_buyers: usize,
    #[arg(long)]
    nu: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct LpArgs {
    /// Prior; continuous priors are discretized at --nu
    #[arg(long)]
    prior: String,
    /// Grid step 1/n for the value grid
    #[arg(long, default_value_t = 0.01)]
    nu: f64,
    /// Mechanism from a JSON file
    #[arg(long, conflicts_with_all = ["exp", "gen2", "posted"])]
    mechanism_file: Option<PathBuf>,
    /// Exponential mechanism parameters, e.g. a=3,X=0.05 (with --buyers, --k)
    #[arg(long)]
    exp: Option<String>,
    /// Generalized two-buyer parameters, e.g. a=2,Y0=1,Y1=0.2 (with --k)
    #[arg(long, conflicts_with = "exp")]
    gen2: Option<String>,
    /// Posted price, e.g. p=0.25
    #[arg(long, conflicts_with_all = ["exp", "gen2"])]
    posted: Option<String>,
    #[arg(long, default_value_t = 1)]
    buyers: usize,
    #[arg(long, default_value_t = 2)]
    k: usize,
    /// Write the worst-case equilibrium weights to this path
    #[arg(long)]
    dump_bce: Option<PathBuf>,
    /// Write the dual certificate to this path
    #[arg(long)]
    dump_cert: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct RsArgs {
    #[arg(long)]
    prior: String,
    /// Bisection tolerance on the bound
    #[arg(long, default_value_t = 1e-9)]
    tol: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct TriangleBoundArgs {
    #[arg(long)]
    nu: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() {
    match Cli::parse().command {
        Command::Guarantee(args) => cmd_guarantee(args),
        Command::Table(args) => cmd_table(args),
        Command::Figure(args) => cmd_figure(args),
        Command::Lp(args) => cmd_lp(args),
        Command::Rs(args) => cmd_rs(args),
        Command::TriangleBound(args) => cmd_triangle_bound(args),
    }
}

fn search_config(nu: Option<f64>) -> SearchConfig<f64> {
    let mut cfg = SearchConfig::default();
    if let Some(nu) = nu {
        cfg.cells = cells_from_nu(nu).unwrap_or_else(|e| fail(EXIT_USAGE, e));
    }
    cfg
}

fn guarantee_for(
    prior: &Prior<f64>,
    buyers: usize,
    variant: Variant,
    cfg: &SearchConfig<f64>,
) -> GuaranteeResult<f64> {
    let run = || match (variant, prior) {
        (Variant::Star, Prior::Continuous(p)) => {
            guarantee::exponential_guarantee_continuous(p, buyers, cfg)
        }
        (Variant::Star, Prior::Discrete(d)) => guarantee::exponential_guarantee(d, buyers, cfg),
        (Variant::Sharp2, Prior::Continuous(p)) => {
            guarantee::generalized_two_buyer_guarantee_continuous(p, cfg)
        }
        (Variant::Sharp2, Prior::Discrete(d)) => {
            guarantee::generalized_two_buyer_guarantee(d, cfg)
        }
    };
    run().unwrap_or_else(|e| fail(EXIT_USAGE, e))
}

fn cmd_guarantee(args: GuaranteeArgs) {
    if args.buyers == 0 {
        fail(EXIT_USAGE, "need at least one buyer");
    }
    if args.variant == Variant::Sharp2 && args.buyers != 2 {
        fail(EXIT_USAGE, "the generalized variant is defined for exactly two buyers");
    }
    let prior = parse_prior(&args.prior).unwrap_or_else(|e| fail(EXIT_USAGE, e));
    let cfg = search_config(args.nu);
    let result = guarantee_for(&prior, args.buyers, args.variant, &cfg);
    let converged = result.converged;
    emit(&args.out, &to_json(&result));
    if !converged {
        fail(EXIT_NO_CONVERGENCE, "search did not converge; best value reported");
    }
}

const TABLE_PRIORS: &[(&str, ContinuousPrior<f64>)] = &[
    ("uniform", ContinuousPrior::Uniform),
    ("concavecdf", ContinuousPrior::ConcaveCdf),
    ("powercdf:2", ContinuousPrior::PowerCdf { exponent: 2.0 }),
    ("beta:2,2", ContinuousPrior::Beta { alpha: 2.0, beta: 2.0 }),
    ("beta:2,4", ContinuousPrior::Beta { alpha: 2.0, beta: 4.0 }),
    ("beta:4,2", ContinuousPrior::Beta { alpha: 4.0, beta: 2.0 }),
    ("beta:8,1", ContinuousPrior::Beta { alpha: 8.0, beta: 1.0 }),
    ("triangle", ContinuousPrior::Triangle),
];

fn cmd_table(args: TableArgs) {
    let cfg = search_config(args.nu);
    let mut csv = String::new();
    csv.push_str("# revenue guarantees at the continuum limit, 4 decimal places\n");
    csv.push_str(&format!("# value grid: {} cells\n", cfg.cells));
    csv.push_str(
        "# the first-price-auction comparison column is computed by a different \
         algorithm elsewhere and is intentionally not reproduced here\n",
    );
    csv.push_str("prior,mean,sharp2,star2,star1\n");
    for (name, prior) in TABLE_PRIORS {
        let sharp2 = guarantee::generalized_two_buyer_guarantee_continuous(prior, &cfg)
            .unwrap_or_else(|e| fail(EXIT_NO_CONVERGENCE, e));
        let star2 = guarantee::exponential_guarantee_continuous(prior, 2, &cfg)
            .unwrap_or_else(|e| fail(EXIT_NO_CONVERGENCE, e));
        let star1 = guarantee::exponential_guarantee_continuous(prior, 1, &cfg)
            .unwrap_or_else(|e| fail(EXIT_NO_CONVERGENCE, e));
        let label = if name.contains(',') { format!("\"{name}\"") } else { (*name).to_string() };
        csv.push_str(&format!(
            "{label},{:.4},{:.4},{:.4},{:.4}\n",
            prior.mean(),
            sharp2.value,
            star2.value,
            star1.value
        ));
    }
    emit(&args.out, &csv);
}

fn cmd_figure(args: FigureArgs) {
    if args.max_buyers == 0 || args.max_buyers > 50 {
        fail(EXIT_USAGE, "max-buyers must lie in 1..=50");
    }
    let prior = parse_prior(&args.prior).unwrap_or_else(|e| fail(EXIT_USAGE, e));
    let cfg = search_config(args.nu);
    let grid = match &prior {
        Prior::Continuous(p) => p
            .discretize(cfg.cells)
            .unwrap_or_else(|e| fail(EXIT_USAGE, e)),
        Prior::Discrete(d) => d.clone(),
    };
    let mut csv = String::new();
    csv.push_str("# exponential-mechanism guarantee by number of buyers\n");
    csv.push_str("buyers,guarantee\n");
    for buyers in 1..=args.max_buyers {
        let res = guarantee::exponential_guarantee(&grid, buyers, &cfg)
            .unwrap_or_else(|e| fail(EXIT_NO_CONVERGENCE, e));
        csv.push_str(&format!("{buyers},{:.4}\n", res.value));
    }
    emit(&args.out, &csv);
}

#[derive(Serialize)]
struct LpReport {
    buyers: usize,
    k: usize,
    grid_cells: usize,
    primal_value: f64,
    dual_value: f64,
    duality_gap: f64,
    consistency_residual: f64,
    obedience_violation: f64,
    certificate_violation: f64,
    complementary_slackness: f64,
}

#[derive(Serialize)]
struct BceDump {
    value: f64,
    mu: Vec<f64>,
}

#[derive(Serialize)]
struct CertDump {
    gamma: Vec<f64>,
    alpha: Vec<Vec<f64>>,
}

fn cmd_lp(args: LpArgs) {
    let mech = build_mechanism(&args);
    let prior = parse_prior(&args.prior).unwrap_or_else(|e| fail(EXIT_USAGE, e));
    let grid: DiscretePrior<f64> = match prior {
        Prior::Discrete(d) => d,
        Prior::Continuous(p) => {
            let cells = cells_from_nu(args.nu).unwrap_or_else(|e| fail(EXIT_USAGE, e));
            p.discretize(cells).unwrap_or_else(|e| fail(EXIT_USAGE, e))
        }
    };
    let n_vars = grid.weights().len() * mech.n_profiles();
    if n_vars > 20_000 {
        fail(
            EXIT_SIZE_CAP,
            format!("program with {n_vars} weights exceeds the 20000 cap; coarsen --nu or shrink the mechanism"),
        );
    }

    let (primal_value, mu) =
        bce::min_revenue(&mech, &grid).unwrap_or_else(|e| fail(EXIT_NO_CONVERGENCE, e));
    let (dual_value, cert) =
        bce::max_dual_revenue(&mech, &grid).unwrap_or_else(|e| fail(EXIT_NO_CONVERGENCE, e));
    let report = bce::verify(&mu, &mech, &grid);
    let lp_report = LpReport {
        buyers: mech.buyers(),
        k: mech.k(),
        grid_cells: grid.cells(),
        primal_value,
        dual_value,
        duality_gap: (primal_value - dual_value).abs(),
        consistency_residual: report.consistency,
        obedience_violation: report.obedience,
        certificate_violation: cert.feasibility_violation(&mech, &value_grid(&grid)),
        complementary_slackness: bce::complementary_slackness(&mu, &cert, &mech, &grid),
    };
    if let Some(path) = &args.dump_bce {
        let dump = BceDump { value: primal_value, mu: mu.weights().to_vec() };
        emit(&Some(path.clone()), &to_json(&dump));
    }
    if let Some(path) = &args.dump_cert {
        let dump = CertDump {
            gamma: cert.gamma.clone(),
            alpha: cert.alpha.matrices().to_vec(),
        };
        emit(&Some(path.clone()), &to_json(&dump));
    }
    emit(&args.out, &to_json(&lp_report));
}

fn build_mechanism(args: &LpArgs) -> FiniteMechanism<f64> {
    if let Some(path) = &args.mechanism_file {
        let text = std::fs::read_to_string(path)
            .unwrap_or_else(|e| fail(EXIT_USAGE, format!("cannot read {}: {e}", path.display())));
        let file: MechanismFile = serde_json::from_str(&text)
            .unwrap_or_else(|e| fail(EXIT_USAGE, format!("bad mechanism file: {e}")));
        return file.into_mechanism().unwrap_or_else(|e| fail(EXIT_USAGE, e));
    }
    if let Some(spec) = &args.exp {
        let kv = parse_kv(spec, &["a", "X"]).unwrap_or_else(|e| fail(EXIT_USAGE, e));
        return FiniteMechanism::exponential(args.buyers, args.k, kv[0], kv[1])
            .unwrap_or_else(|e| fail(EXIT_USAGE, e));
    }
    if let Some(spec) = &args.gen2 {
        let kv = parse_kv(spec, &["a", "Y0", "Y1"]).unwrap_or_else(|e| fail(EXIT_USAGE, e));
        return FiniteMechanism::generalized_two_buyer(args.k, kv[0], kv[1], kv[2])
            .unwrap_or_else(|e| fail(EXIT_USAGE, e));
    }
    if let Some(spec) = &args.posted {
        let kv = parse_kv(spec, &["p"]).unwrap_or_else(|e| fail(EXIT_USAGE, e));
        return FiniteMechanism::posted_price(kv[0]).unwrap_or_else(|e| fail(EXIT_USAGE, e));
    }
    fail(
        EXIT_USAGE,
        "choose a mechanism: --mechanism-file, --exp, --gen2, or --posted",
    )
}

fn cmd_rs(args: RsArgs) {
    let prior = parse_prior(&args.prior)
        .and_then(require_continuous)
        .unwrap_or_else(|e| fail(EXIT_USAGE, e));
    let bound = guarantee::roesler_szentes(&prior, args.tol)
        .unwrap_or_else(|e| fail(EXIT_NO_CONVERGENCE, e));
    emit(&args.out, &to_json(&bound));
}

#[derive(Serialize)]
struct TriangleReport {
    wallet_game_bound: f64,
    star2: f64,
    sharp2: f64,
    star2_share_of_bound: f64,
    sharp2_share_of_bound: f64,
}

fn cmd_triangle_bound(args: TriangleBoundArgs) {
    let cfg = search_config(args.nu);
    let bound = guarantee::wallet_game_bound::<f64>();
    let star2 = guarantee::exponential_guarantee_continuous(&ContinuousPrior::Triangle, 2, &cfg)
        .unwrap_or_else(|e| fail(EXIT_NO_CONVERGENCE, e));
    let sharp2 =
        guarantee::generalized_two_buyer_guarantee_continuous(&ContinuousPrior::Triangle, &cfg)
            .unwrap_or_else(|e| fail(EXIT_NO_CONVERGENCE, e));
    let report = TriangleReport {
        wallet_game_bound: bound,
        star2: star2.value,
        sharp2: sharp2.value,
        star2_share_of_bound: star2.value / bound,
        sharp2_share_of_bound: sharp2.value / bound,
    };
    emit(&args.out, &to_json(&report));
}
