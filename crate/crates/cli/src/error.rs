use std::fmt::Display;
use std::io::{self, BufWriter, Write};
use std::path::Path;

/// A failed command and the exit code it maps to.
#[derive(Debug)]
pub enum Failure {
    /// Bad input, config or arguments (exit 1).
    Validation(anyhow::Error),
    /// The run itself failed (exit 2).
    Runtime(anyhow::Error),
}

impl Failure {
    pub fn exit_code(&self) -> i32 {
        match self {
            Failure::Validation(_) => 1,
            Failure::Runtime(_) => 2,
        }
    }

    pub fn invalid(msg: impl Display) -> Self {
        Failure::Validation(anyhow::anyhow!("{msg}"))
    }
}

impl Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Validation(e) | Failure::Runtime(e) => write!(f, "{e:#}"),
        }
    }
}

pub type CmdResult<T> = Result<T, Failure>;

pub trait Context<T> {
    fn invalid(self, ctx: impl Display) -> CmdResult<T>;
    fn runtime(self, ctx: impl Display) -> CmdResult<T>;
}

impl<T, E> Context<T> for Result<T, E>
where
    E: Into<anyhow::Error>,
{
    fn invalid(self, ctx: impl Display) -> CmdResult<T> {
        self.map_err(|e| Failure::Validation(e.into().context(ctx.to_string())))
    }

    fn runtime(self, ctx: impl Display) -> CmdResult<T> {
        self.map_err(|e| Failure::Runtime(e.into().context(ctx.to_string())))
    }
}

/// Writes through a temp file in the target directory, then renames it
/// into place.
pub fn write_atomic(
    path: &Path,
    f: impl FnOnce(&mut dyn Write) -> io::Result<()>,
) -> CmdResult<()> {
    let ctx = || format!("writing {}", path.display());
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).runtime(ctx())?;
    {
        let mut w = BufWriter::new(tmp.as_file_mut());
        f(&mut w).runtime(ctx())?;
        w.flush().runtime(ctx())?;
    }
    tmp.persist(path).map_err(|e| e.error).runtime(ctx())?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn atomic_write_replaces_target() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("out.txt");
        std::fs::write(&path, "old").unwrap();
        write_atomic(&path, |w| w.write_all(b"new")).unwrap();
        assert_eq!(std::fs::read_to_string(&path).unwrap(), "new");
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
    }

    #[test]
    fn failed_write_leaves_target() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("out.txt");
        std::fs::write(&path, "old").unwrap();
        let err = write_atomic(&path, |_| Err(io::Error::other("boom"))).unwrap_err();
        assert_eq!(err.exit_code(), 2);
        assert_eq!(std::fs::read_to_string(&path).unwrap(), "old");
    }
}
