use std::process::ExitCode;

use clap::{Parser, Subcommand};

mod cmd_data;
mod cmd_exp;
mod cmd_model;
mod ctx;

use ctx::Invalid;

#[derive(Parser, Debug)]
#[command(name = "algoprob", version, about = "Algorithmic-probability estimation, search and classification")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// CTM tables: enumerate, import, query.
    #[command(subcommand)]
    Ctm(CtmCmd),
    /// BDM of a tensor.
    #[command(subcommand)]
    Bdm(ComputeCmd),
    /// Conditional BDM of one tensor given another.
    #[command(subcommand)]
    Cbdm(CondComputeCmd),
    /// Seeded datasets.
    #[command(subcommand)]
    Gen(GenCmd),
    /// Domain-specific conditional databases.
    #[command(subcommand)]
    Dctm(DctmCmd),
    /// Train a model on a generated dataset.
    Train(cmd_model::TrainArgs),
    /// Predict labels for a dataset file.
    Predict(cmd_model::PredictArgs),
    /// Accuracy and confusion matrix of a model.
    Eval(cmd_model::EvalArgs),
    /// ODE parameter recovery.
    #[command(subcommand)]
    Ode(OdeCmd),
    /// Sample weights.
    #[command(subcommand)]
    Weights(WeightsCmd),
    /// Adversarial sweeps.
    #[command(subcommand)]
    Attack(AttackCmd),
    /// Experiments: entropy vs BDM, partition sizes, regression surface, search speed-up.
    #[command(subcommand)]
    Exp(ExpCmd),
}

#[derive(Subcommand, Debug)]
enum CtmCmd {
    Enumerate(cmd_data::EnumerateArgs),
    Import(cmd_data::ImportArgs),
    Query(cmd_data::QueryArgs),
}

#[derive(Subcommand, Debug)]
enum ComputeCmd {
    Compute(cmd_data::BdmArgs),
}

#[derive(Subcommand, Debug)]
enum CondComputeCmd {
    Compute(cmd_data::CbdmArgs),
}

#[derive(Subcommand, Debug)]
enum GenCmd {
    EcaRules(cmd_data::GenArgs),
    EcaInit(cmd_data::GenArgs),
    Nk(cmd_data::GenNkArgs),
}

#[derive(Subcommand, Debug)]
enum DctmCmd {
    BuildEca(cmd_data::DctmArgs),
    BuildNk(cmd_data::DctmArgs),
}

#[derive(Subcommand, Debug)]
enum OdeCmd {
    Fit(cmd_exp::OdeFitArgs),
    Noise(cmd_exp::OdeNoiseArgs),
}

#[derive(Subcommand, Debug)]
enum WeightsCmd {
    Export(cmd_model::WeightsArgs),
}

#[derive(Subcommand, Debug)]
enum AttackCmd {
    Sweep(cmd_model::AttackArgs),
}

#[derive(Subcommand, Debug)]
enum ExpCmd {
    Hvbdm(cmd_exp::ExpArgs),
    Partition(cmd_exp::ExpArgs),
    Surface(cmd_exp::ExpArgs),
    Speedup(cmd_exp::ExpArgs),
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Ctm(CtmCmd::Enumerate(a)) => cmd_data::enumerate(a),
        Command::Ctm(CtmCmd::Import(a)) => cmd_data::import(a),
        Command::Ctm(CtmCmd::Query(a)) => cmd_data::query(a),
        Command::Bdm(ComputeCmd::Compute(a)) => cmd_data::bdm(a),
        Command::Cbdm(CondComputeCmd::Compute(a)) => cmd_data::cbdm(a),
        Command::Gen(GenCmd::EcaRules(a)) => cmd_data::gen_eca_rules(a),
        Command::Gen(GenCmd::EcaInit(a)) => cmd_data::gen_eca_init(a),
        Command::Gen(GenCmd::Nk(a)) => cmd_data::gen_nk(a),
        Command::Dctm(DctmCmd::BuildEca(a)) => cmd_data::build_eca(a),
        Command::Dctm(DctmCmd::BuildNk(a)) => cmd_data::build_nk(a),
        Command::Train(a) => cmd_model::train(a),
        Command::Predict(a) => cmd_model::predict(a),
        Command::Eval(a) => cmd_model::eval(a),
        Command::Ode(OdeCmd::Fit(a)) => cmd_exp::ode_fit(a),
        Command::Ode(OdeCmd::Noise(a)) => cmd_exp::ode_noise(a),
        Command::Weights(WeightsCmd::Export(a)) => cmd_model::weights(a),
        Command::Attack(AttackCmd::Sweep(a)) => cmd_model::attack(a),
        Command::Exp(ExpCmd::Hvbdm(a)) => cmd_exp::hvbdm(a),
        Command::Exp(ExpCmd::Partition(a)) => cmd_exp::partition(a),
        Command::Exp(ExpCmd::Surface(a)) => cmd_exp::surface(a),
        Command::Exp(ExpCmd::Speedup(a)) => cmd_exp::speedup(a),
    }
}

/// 2 for bad input, 1 for everything else.
fn exit_code(err: &anyhow::Error) -> u8 {
    if err.downcast_ref::<Invalid>().is_some() {
        return 2;
    }
    if let Some(e) = err.downcast_ref::<algoprob::Error>() {
        return if e.is_validation() { 2 } else { 1 };
    }
    1
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
