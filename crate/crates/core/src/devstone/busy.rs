use std::time::Duration;

use crate::cpu;

/// Integer and string work units, Dhrystone-flavored. Only the CPU-seconds
/// contract of [`busy_cpu`] matters; this keeps the optimizer from deleting
/// the loop and each step well under a microsecond.
#[derive(Debug, Clone)]
struct Workload {
    int_glob: u64,
    arr: [u32; 32],
    str_a: [u8; 30],
    str_b: [u8; 30],
}

impl Default for Workload {
    fn default() -> Self {
        let mut str_a = [b' '; 30];
        let mut str_b = [b' '; 30];
        str_a[..24].copy_from_slice(b"DHRYSTONE PROGRAM, 1'ST ");
        str_b[..24].copy_from_slice(b"DHRYSTONE PROGRAM, 2'ND ");
        Self {
            int_glob: 5,
            arr: [0; 32],
            str_a,
            str_b,
        }
    }
}

impl Workload {
    #[inline(never)]
    fn step(&mut self, i: u64) {
        let mut a = self.int_glob.wrapping_add(i);
        let b = a.wrapping_mul(3) ^ (i >> 1);
        a = a.rotate_left(7).wrapping_add(b);
        let slot = (a % 32) as usize;
        self.arr[slot] = self.arr[slot].wrapping_add((b & 0xffff) as u32);
        // string assignment and comparison
        let k = (i % 30) as usize;
        std::mem::swap(&mut self.str_a[k], &mut self.str_b[29 - k]);
        if self.str_a < self.str_b {
            self.int_glob = self.int_glob.wrapping_add(1);
        } else {
            self.int_glob = self.int_glob.wrapping_sub(1) ^ (a & 7);
        }
    }
}

/// Steps between clock reads; keeps one check well under 50 µs of work.
const CHUNK: u64 = 128;

/// Spins until the calling thread has consumed at least `seconds` of CPU
/// time. Time the thread spends descheduled does not count, so concurrent
/// callers each burn their full share. Returns the work steps executed.
pub fn busy_cpu(seconds: f64) -> u64 {
    if seconds.is_nan() || seconds <= 0.0 {
        return 0;
    }
    let target = Duration::from_secs_f64(seconds);
    let start = cpu::thread_time();
    let mut work = Workload::default();
    let mut steps = 0u64;
    loop {
        for _ in 0..CHUNK {
            work.step(steps);
            steps += 1;
        }
        if cpu::thread_time().saturating_sub(start) >= target {
            break;
        }
    }
    std::hint::black_box(&work);
    steps
}
