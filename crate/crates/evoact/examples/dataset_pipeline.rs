//! Dataset plumbing: synthetic generation, the fixed train/test boundary,
//! random vs deterministic validation draws, and train-fitted scaling.
//!
//! ```bash
//! cargo run --example dataset_pipeline
//! ```

use ndarray::Axis;

use evoact::data::{split, synth, Scaler, Scaling, SplitSpec, SynthKind};
use evoact::rng::{derive, StreamAddress};

fn main() {
    let addr = StreamAddress::root();
    let data = synth(
        SynthKind::Moons,
        100,
        0.2,
        &mut derive(5, &addr.child("data", 0)),
    );
    println!("{} rows, features {:?}", data.n_rows(), data.feature_names);

    let spec = SplitSpec::default();
    let det = split(
        data.n_rows(),
        &spec,
        true,
        &mut derive(5, &addr.child("unused", 0)),
    )
    .unwrap();
    println!(
        "75/25 split with a 10% validation slice: train {}, val {}, test {}",
        det.train.len(),
        det.val.len(),
        det.test.len()
    );

    // The test boundary never moves; the random validation draw does.
    let mut rng = derive(5, &addr.child("val_draws", 0));
    let a = split(data.n_rows(), &spec, false, &mut rng).unwrap();
    let b = split(data.n_rows(), &spec, false, &mut rng).unwrap();
    assert_eq!(a.test, det.test);
    assert_eq!(b.test, det.test);
    println!(
        "two random draws share {} of {} validation rows; deterministic draws always match",
        a.val.iter().filter(|i| b.val.contains(i)).count(),
        a.val.len()
    );

    // Scaling statistics come from training rows only.
    let train_rows = data.features.select(Axis(0), &det.train);
    let scaler = Scaler::fit(Scaling::Standardize, train_rows.view());
    let scaled_train = scaler.transform(train_rows.view());
    let scaled_test = scaler.transform(data.features.select(Axis(0), &det.test).view());
    let col_mean = |m: &ndarray::Array2<f64>, c: usize| m.column(c).sum() / m.nrows() as f64;
    println!(
        "train column means after standardization: ({:+.3}, {:+.3}); test inherits the train fit: ({:+.3}, {:+.3})",
        col_mean(&scaled_train, 0),
        col_mean(&scaled_train, 1),
        col_mean(&scaled_test, 0),
        col_mean(&scaled_test, 1),
    );
}
