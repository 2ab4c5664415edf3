use ringclock::model::{AmplitudeTable, ModelConfig};
use ringclock::observables::{
    correlator_ss, dominant_period, peak_angle_series, power_spectral_density, CorrelatorOptions,
    PsdOptions,
};
use ringclock::state::PureState;
use ringclock::trajectory::{run_trajectory, TrajectoryOptions};

#[test]
fn correlator_frequency_matches_peak_angle_spectrum() {
    let c = ModelConfig::uniform(40, 1.0, 4.0, 1.0).unwrap();
    let t = AmplitudeTable::build(&c).unwrap();
    let period = c.reference_period();

    let opts = CorrelatorOptions {
        tau_max: 8.0 * period,
        tau_step: 0.25,
        dt: 0.025,
    };
    let corr = correlator_ss(&c, &t, 0, &opts).unwrap();
    let omega_corr = std::f64::consts::TAU / dominant_period(&corr.normalized, 0.25, 8).unwrap();

    let psi0 = PureState::momentum_eigenstate(40, 0).unwrap();
    let mut topts = TrajectoryOptions::new(40000.0, period / 50.0);
    topts.t_record_from = 2000.0;
    let rec = run_trajectory(&c, &t, &psi0, &topts, 17).unwrap();
    let y = peak_angle_series(&rec.angles());
    let psd = power_spectral_density(&y, topts.sample_dt, &PsdOptions::default()).unwrap();
    let omega_psd = psd.peak_omega();

    let rel = (omega_corr - omega_psd).abs() / omega_psd;
    assert!(rel < 0.15, "correlator {omega_corr}, spectrum {omega_psd}");
}
