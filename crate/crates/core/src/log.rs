//! Line-oriented replica event logs.

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt::{self, Write as _};

/// Append-only list of `time kind key=value...` lines.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct EventLog {
    lines: Vec<String>,
}

impl EventLog {
    pub fn push(&mut self, time: u64, args: fmt::Arguments<'_>) {
        let mut s = String::new();
        let _ = write!(s, "{time} ");
        let _ = s.write_fmt(args);
        self.lines.push(s);
    }

    pub fn lines(&self) -> &[String] {
        &self.lines
    }

    /// Lines without the leading timestamp.
    pub fn events(&self) -> impl Iterator<Item = &str> {
        self.lines.iter().map(|l| l.split_once(' ').map_or(l.as_str(), |(_, rest)| rest))
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        for l in &self.lines {
            s.push_str(l);
            s.push('\n');
        }
        s
    }
}

#[macro_export]
#[doc(hidden)]
macro_rules! log_event {
    ($log:expr, $t:expr, $($arg:tt)*) => {
        $log.push($t, format_args!($($arg)*))
    };
}
