use ycycle_core::synth::{default_roster, generate_dataset};

fn main() {
    let cycles = generate_dataset(&default_roster(), 20260501).unwrap();
    let mut time = [0.0f64; 3];
    let mut total_frames = 0usize;
    for series in &cycles {
        let t = series.time_per_label();
        for k in 0..3 {
            time[k] += t[k];
        }
        total_frames += series.len();
    }
    let total: f64 = time.iter().sum();
    println!(
        "cycles {} frames {} total {:.1}s | travel {:.2}% loading {:.2}% unloading {:.2}%",
        cycles.len(),
        total_frames,
        total,
        time[0] / total * 100.0,
        time[1] / total * 100.0,
        time[2] / total * 100.0
    );
    let durations: Vec<f64> = cycles.iter().map(|c| c.duration_s()).collect();
    let min = durations.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = durations.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    println!("cycle durations: min {min:.1}s max {max:.1}s");
}
