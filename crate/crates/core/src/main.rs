use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Arg, ArgAction, ArgMatches};
use gasket_lab::lab::config::{parse_pairs, VERSION};
use gasket_lab::lab::output::error_record;
use gasket_lab::lab::{run, Command, ExperimentConfig};
use gasket_lab::LabError;

fn cli() -> clap::Command {
    let mut app = clap::Command::new("gasket-lab")
        .version(VERSION)
        .about("Stable processes on the Sierpinski gasket among Poissonian obstacles")
        .subcommand_required(true)
        .arg_required_else_help(true);
    for cmd in Command::ALL {
        let mut sub = clap::Command::new(cmd.name())
            .about(cmd.about())
            .arg(Arg::new("config").long("config").value_name("FILE").help("key=value file; flags override it"))
            .arg(out_arg());
        for key in cmd.keys() {
            sub = sub.arg(
                Arg::new(key.name)
                    .long(key.name)
                    .value_name("VALUE")
                    .help(format!("{} [default: {}]", key.help, key.default))
                    .allow_negative_numbers(true)
                    .action(ArgAction::Set),
            );
        }
        app = app.subcommand(sub);
    }
    app.subcommand(
        clap::Command::new("replay")
            .about("Re-run an experiment from its manifest.txt")
            .arg(Arg::new("manifest").required(true).value_name("MANIFEST"))
            .arg(out_arg()),
    )
}

fn out_arg() -> Arg {
    Arg::new("out").long("out").value_name("DIR").help("run directory [default: runs/<command>-seed<seed>]")
}

fn read(path: &Path) -> Result<String, LabError> {
    fs::read_to_string(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => LabError::InputNotFound(path.to_path_buf()),
        _ => LabError::Io(e),
    })
}

fn config_from(name: &str, m: &ArgMatches) -> Result<ExperimentConfig, LabError> {
    if name == "replay" {
        let path = PathBuf::from(m.get_one::<String>("manifest").expect("required"));
        return ExperimentConfig::from_manifest(&read(&path)?);
    }
    let command: Command = name.parse()?;
    let mut cfg = ExperimentConfig::new(command);
    if let Some(file) = m.get_one::<String>("config") {
        cfg.apply(parse_pairs(&read(Path::new(file))?)?);
    }
    for key in command.keys() {
        if let Some(v) = m.get_one::<String>(key.name) {
            cfg.apply([(key.name.to_string(), v.clone())]);
        }
    }
    Ok(cfg)
}

fn main() -> ExitCode {
    let matches = cli().get_matches();
    let (name, sub) = matches.subcommand().expect("subcommand required");
    let out = |tag: String| sub.get_one::<String>("out").map(PathBuf::from).unwrap_or_else(|| PathBuf::from("runs").join(tag));
    let mut cfg = match config_from(name, sub) {
        Ok(cfg) => cfg,
        Err(e) => return fail(&out(name.to_string()), e),
    };
    let suffix = if name == "replay" { "-replay" } else { "" };
    let dir = out(format!("{}-seed{}{suffix}", cfg.command, cfg.get("seed")));
    match run(&mut cfg, &dir) {
        Ok(outcome) => {
            println!("wrote {}", dir.display());
            if outcome.failures.is_empty() {
                ExitCode::SUCCESS
            } else {
                eprintln!("failed: {}", outcome.failures.join(", "));
                ExitCode::from(1)
            }
        }
        Err(e) => fail(&dir, e),
    }
}

fn fail(dir: &Path, e: LabError) -> ExitCode {
    write_error(dir, &e);
    eprintln!("error: {e}");
    if let LabError::Validation(fields) = &e {
        for f in fields {
            eprintln!("  {f}");
        }
    }
    match e {
        LabError::Validation(_) | LabError::Parse(_) => ExitCode::from(2),
        _ => ExitCode::from(1),
    }
}

fn write_error(dir: &Path, e: &LabError) {
    if fs::create_dir_all(dir).is_ok() {
        let _ = fs::write(dir.join("error.txt"), error_record(e));
    }
}
