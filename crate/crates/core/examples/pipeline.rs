//! The three commands end to end in a scratch directory: run both solvers
//! for a short time, analyze the engine output, compare it with the
//! reference, and check every manifest.
//!
//!     cargo run --release --example pipeline -- [t_final]

use qhydro::cli::{cmd_analyze, cmd_compare, cmd_run, Analysis, Mode};
use qhydro::config::load_config;
use qhydro::io::{read_manifest, verify_manifest};
use qhydro::model::Case;

fn main() -> qhydro::Result<()> {
    let t_final = std::env::args().nth(1).unwrap_or_else(|| "10".into());
    let cfg = load_config(&format!("[hydro]\nt_final = {t_final}\n"), Some(Case::Uncoupled))?;
    let root = std::env::temp_dir().join(format!("qhydro-pipeline-{}", std::process::id()));
    let (qtm, oracle, analysis, compare) = (
        root.join("qtm"),
        root.join("oracle"),
        root.join("analysis"),
        root.join("compare"),
    );

    for (mode, dir) in [(Mode::Qtm, &qtm), (Mode::Oracle, &oracle)] {
        let m = cmd_run(&cfg, mode, dir)?;
        println!("run {mode:?}: {} files, id {}", m.files.len(), m.run_id);
    }
    let m = cmd_analyze(std::slice::from_ref(&qtm), &Analysis::ALL, &cfg, &analysis)?;
    println!("analyze: {} files", m.files.len());
    for note in &m.notes {
        println!("  {note}");
    }
    println!(
        "{}",
        std::fs::read_to_string(analysis.join("nsresidual.dat")).expect("summary written")
    );
    cmd_compare(std::slice::from_ref(&qtm), std::slice::from_ref(&oracle), &compare)?;
    println!(
        "{}",
        std::fs::read_to_string(compare.join("compare.dat")).expect("report written")
    );

    for dir in [&qtm, &oracle, &analysis, &compare] {
        let status = read_manifest(dir)?.status;
        println!(
            "{}: {status}, {} mismatched checksums",
            dir.display(),
            verify_manifest(dir)?.len()
        );
    }
    println!("outputs left in {}", root.display());
    Ok(())
}
