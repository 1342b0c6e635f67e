//! CPU-time clocks (not wall time).

use std::time::Duration;

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
#[error("CPU-time clock unavailable on this platform (errno {errno})")]
pub struct CpuClockUnavailable {
    pub errno: i32,
}

fn read(clock: libc::clockid_t) -> Result<Duration, CpuClockUnavailable> {
    let mut ts = libc::timespec { tv_sec: 0, tv_nsec: 0 };
    // SAFETY: `ts` is a valid, writable timespec for the duration of the call.
    let rc = unsafe { libc::clock_gettime(clock, &mut ts) };
    if rc != 0 {
        return Err(CpuClockUnavailable {
            errno: std::io::Error::last_os_error().raw_os_error().unwrap_or(0),
        });
    }
    Ok(Duration::new(ts.tv_sec as u64, ts.tv_nsec as u32))
}

/// CPU time consumed so far by the calling thread.
pub fn thread_time() -> Duration {
    read(libc::CLOCK_THREAD_CPUTIME_ID).expect("thread CPU clock probed at startup")
}

/// CPU time consumed so far by the whole process, all threads included.
pub fn process_time() -> Duration {
    read(libc::CLOCK_PROCESS_CPUTIME_ID).expect("process CPU clock probed at startup")
}

/// Verifies both CPU clocks work. Call once before running anything that
/// relies on CPU-time delays so a missing clock fails at startup.
pub fn probe() -> Result<(), CpuClockUnavailable> {
    read(libc::CLOCK_THREAD_CPUTIME_ID)?;
    read(libc::CLOCK_PROCESS_CPUTIME_ID)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn clocks_advance_with_work() {
        probe().unwrap();
        let t0 = thread_time();
        let p0 = process_time();
        let mut x = 0u64;
        for i in 0..5_000_000u64 {
            x = x.wrapping_mul(31).wrapping_add(i);
        }
        std::hint::black_box(x);
        assert!(thread_time() > t0);
        assert!(process_time() > p0);
    }

    #[test]
    fn sleeping_costs_no_cpu() {
        let t0 = thread_time();
        std::thread::sleep(Duration::from_millis(50));
        assert!(thread_time() - t0 < Duration::from_millis(20));
    }
}
