//! Modulate a spoken-band tone onto a 25 kHz carrier, play it through the
//! simulated air/microphone channel, and show what comes out the other side:
//! nothing audible leaves the speaker, yet the recorder hears the tone.
//!
//!     cargo run --release --example inaudible_channel

use ultrahush::channel::{audible_leakage, modulate_dsb, transmit, ChannelScene};
use ultrahush::signal::{band_power, tone_amplitude, Waveform};

fn main() -> ultrahush::Result<()> {
    let scene = ChannelScene::default();
    let tone = Waveform::tone(1000.0, 1.0, 1.0, scene.adc_rate, std::f64::consts::FRAC_PI_2);

    let emitted = modulate_dsb(&tone, &scene)?;
    let leak = audible_leakage(&emitted, &scene);
    let carrier_band = band_power(&emitted.wave, 17_000.0, 33_000.0);
    println!(
        "emitted: carrier-band power {:.3e}, audible leakage {:.3e} ({:.1} dB down)",
        carrier_band,
        leak,
        10.0 * (leak / carrier_band).log10()
    );

    let recorded = transmit(&emitted, &scene)?;
    let fund = tone_amplitude(&recorded, 1000.0);
    let second = tone_amplitude(&recorded, 2000.0);
    println!(
        "recorded at {} m / {}°: 1 kHz line {:.4}, 2 kHz line {:.4} (ratio {:.3})",
        scene.distance_m,
        scene.angle_deg,
        fund,
        second,
        second / fund
    );

    for d in [1.0, 2.0, 5.0, 10.0] {
        let far = scene.at(d, scene.angle_deg);
        let rec = transmit(&modulate_dsb(&tone, &far)?, &far)?;
        println!(
            "  {:4.0} m: demodulated 1 kHz amplitude {:.5}, noise floor rms {:.5}",
            d,
            tone_amplitude(&rec, 1000.0),
            ultrahush::channel::carrier_noise(&far, 1.0)?.rms()
        );
    }
    Ok(())
}
