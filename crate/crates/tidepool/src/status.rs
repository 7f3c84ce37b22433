//! Process-wide cast policy, sticky status flags and warning delivery.

use std::sync::atomic::{AtomicBool, AtomicU32, Ordering};
use std::sync::{Arc, RwLock};

static IMPLICIT_CASTING: AtomicBool = AtomicBool::new(true);
static FLAGS: AtomicU32 = AtomicU32::new(0);

/// Whether operations may convert dtypes and move data between devices on
/// their own. When disabled every such site fails instead.
pub fn implicit_casting() -> bool {
    IMPLICIT_CASTING.load(Ordering::Relaxed)
}

/// Returns the previous setting. Must not be toggled while tensor
/// operations are running on other threads.
pub fn set_implicit_casting(enabled: bool) -> bool {
    IMPLICIT_CASTING.swap(enabled, Ordering::Relaxed)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct StatusFlags(u32);

impl StatusFlags {
    pub const DOMAIN: StatusFlags = StatusFlags(1);
    pub const DIVIDE_BY_ZERO: StatusFlags = StatusFlags(2);
    pub const LOSSY_CAST: StatusFlags = StatusFlags(4);

    pub fn contains(self, other: StatusFlags) -> bool {
        self.0 & other.0 == other.0
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn bits(self) -> u32 {
        self.0
    }
}

impl std::ops::BitOr for StatusFlags {
    type Output = StatusFlags;
    fn bitor(self, rhs: StatusFlags) -> StatusFlags {
        StatusFlags(self.0 | rhs.0)
    }
}

pub fn status() -> StatusFlags {
    StatusFlags(FLAGS.load(Ordering::Relaxed))
}

/// Return the flags raised so far and clear them.
pub fn clear_status() -> StatusFlags {
    StatusFlags(FLAGS.swap(0, Ordering::Relaxed))
}

pub(crate) fn raise(flags: StatusFlags) {
    FLAGS.fetch_or(flags.0, Ordering::Relaxed);
}

type Handler = Arc<dyn Fn(&str) + Send + Sync>;

static WARNING_HANDLER: RwLock<Option<Handler>> = RwLock::new(None);

/// Install a warning handler; `None` restores printing to stderr.
pub fn set_warning_handler(handler: Option<Handler>) {
    *WARNING_HANDLER.write().unwrap() = handler;
}

pub(crate) fn warn(message: &str) {
    let h = WARNING_HANDLER.read().unwrap().clone();
    match h {
        Some(h) => h(message),
        None => eprintln!("tidepool warning: {message}"),
    }
}

/// Guard that restores the previous implicit-casting setting on drop.
pub struct CastingGuard(bool);

impl CastingGuard {
    pub fn set(enabled: bool) -> CastingGuard {
        CastingGuard(set_implicit_casting(enabled))
    }
}

impl Drop for CastingGuard {
    fn drop(&mut self) {
        set_implicit_casting(self.0);
    }
}
