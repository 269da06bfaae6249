use std::fs;
use std::path::{Path, PathBuf};

use super::{render_files, BiasReport};
use crate::config::Format;
use crate::error::{Error, Result};

fn output_error(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Output {
        path: path.to_path_buf(),
        source,
    }
}

/// Writes files into a staging directory next to `out`, then moves them into place.
///
/// Nothing appears under `out` unless every file was staged successfully.
pub fn write_files(files: &[(PathBuf, Vec<u8>)], out: &Path) -> Result<()> {
    let parent = match out.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    fs::create_dir_all(&parent).map_err(output_error(&parent))?;
    let staging = tempfile::Builder::new()
        .prefix(".vlmaudit-staging-")
        .tempdir_in(&parent)
        .map_err(output_error(&parent))?;

    for (rel, bytes) in files {
        let path = staging.path().join(rel);
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir).map_err(output_error(dir))?;
        }
        fs::write(&path, bytes).map_err(output_error(&path))?;
    }

    if !out.exists() {
        let staged = staging.keep();
        return fs::rename(&staged, out).map_err(|e| {
            let _ = fs::remove_dir_all(&staged);
            output_error(out)(e)
        });
    }
    for (rel, _) in files {
        let dest = out.join(rel);
        if let Some(dir) = dest.parent() {
            fs::create_dir_all(dir).map_err(output_error(dir))?;
        }
        fs::rename(staging.path().join(rel), &dest).map_err(output_error(&dest))?;
    }
    Ok(())
}

pub fn write_report(report: &BiasReport, formats: &[Format], out: &Path) -> Result<()> {
    write_files(&render_files(report, formats), out)
}
