use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::failure::Failure;

pub fn read_file(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| Failure::input(format!("cannot read {}: {e}", path.display())))
}

fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let mut name = path.file_name().unwrap_or_default().to_os_string();
    name.push(suffix);
    path.with_file_name(name)
}

/// Write through a temporary file in the same directory and rename, so a
/// failed run never leaves a partial file at `path`.
pub fn write_atomic(path: &Path, contents: &str) -> Result<(), Failure> {
    let tmp = sibling(path, &format!(".tmp{}", std::process::id()));
    let io = |e: std::io::Error| Failure::Runtime(format!("cannot write {}: {e}", path.display()));
    let mut f = fs::File::create(&tmp).map_err(io)?;
    f.write_all(contents.as_bytes()).map_err(io)?;
    f.sync_all().map_err(io)?;
    drop(f);
    fs::rename(&tmp, path).map_err(io)
}

pub fn gnuplot_path(out: &Path) -> PathBuf {
    sibling(out, ".gp")
}

pub fn manifest_path(out: &Path) -> PathBuf {
    sibling(out, ".manifest")
}

/// Plot script for a CSV whose first column is the abscissa.
/// `extra` is inserted verbatim before the plot command.
pub fn gnuplot_script(csv: &Path, header: &str, ylabel: &str, extra: &str) -> String {
    let cols: Vec<&str> = header.split(',').collect();
    let file = csv.file_name().map(|f| f.to_string_lossy().into_owned()).unwrap_or_default();
    let mut s = String::new();
    s.push_str("set datafile separator ','\n");
    s.push_str(&format!("set xlabel '{}'\n", cols[0]));
    s.push_str(&format!("set ylabel '{ylabel}'\n"));
    s.push_str("set key outside\n");
    s.push_str(extra);
    let plots: Vec<String> = (2..=cols.len())
        .map(|i| {
            let src = if i == 2 { format!("'{file}'") } else { "''".to_string() };
            format!("{src} using 1:{i} with lines title '{}'", cols[i - 1])
        })
        .collect();
    s.push_str(&format!("plot {}\n", plots.join(", \\\n     ")));
    s
}

/// CSV to `out` (plus a plot script next to it) or to stdout.
pub fn emit_table(out: Option<&Path>, csv: &str, ylabel: &str, extra: &str) -> Result<(), Failure> {
    match out {
        Some(path) => {
            let header = csv.lines().next().unwrap_or("");
            write_atomic(path, csv)?;
            write_atomic(&gnuplot_path(path), &gnuplot_script(path, header, ylabel, extra))
        }
        None => {
            print!("{csv}");
            Ok(())
        }
    }
}
