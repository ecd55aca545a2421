mod common;

use common::oracle::SlotModel;

#[test]
fn void22_without_overhead() {
    let m = SlotModel::reference(22, 0, 5);
    assert_eq!(*m.bind_times().last().unwrap(), 1330);
    assert!((m.mean_delay_s() - 115.6).abs() < 1e-9);
}

#[test]
fn void16_without_overhead() {
    // 48 slots: 48 pods wait 520 s, 4 wait 1040 s.
    let m = SlotModel::reference(16, 0, 5);
    assert!((m.mean_delay_s() - 291.2).abs() < 1e-9);
    assert_eq!(m.duration_s(), 2030);
}

#[test]
fn void10_without_overhead() {
    // Waves of 30 delayed by 700, 1400 and 2100 s.
    let m = SlotModel::reference(10, 0, 5);
    assert!((m.mean_delay_s() - 840.0).abs() < 1e-9);
    assert_eq!(m.duration_s(), 3090);
}

#[test]
fn void10_with_runtime_overhead() {
    let m = SlotModel::reference(10, 25, 5);
    assert!((m.mean_delay_s() / 60.0 - 14.5).abs() < 1e-9);
    assert!((m.duration_s() as f64 / 60.0 - 52.75).abs() < 1e-9);
}

#[test]
fn cycle_quantization_only_delays() {
    for w in [10, 16, 22] {
        let fine = SlotModel::reference(w, 25, 1).bind_times();
        let coarse = SlotModel::reference(w, 25, 10).bind_times();
        assert!(fine.iter().zip(&coarse).all(|(a, b)| a <= b));
    }
}

#[test]
fn void10_peak_is_arrivals_minus_slots_minus_completions() {
    let m = SlotModel::reference(10, 25, 5);
    let step = 20;
    let end = *m.bind_times().last().unwrap();
    let (t_peak, peak) = (0..=end / step)
        .map(|k| (k * step, m.backlog_at(k * step)))
        .max_by_key(|&(t, b)| (b, std::cmp::Reverse(t)))
        .unwrap();
    let arrived = (t_peak / 10 + 1).min(100);
    assert_eq!(peak, arrived - 30 - m.completed_by(t_peak).min(arrived - 30));
    assert_eq!(peak, m.peak_backlog(step));
}
