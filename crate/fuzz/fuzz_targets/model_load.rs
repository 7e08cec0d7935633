#![no_main]

use libfuzzer_sys::fuzz_target;
use room_awareness::background_model::BackgroundModel;

fuzz_target!(|data: &[u8]| {
    if let Ok(model) = BackgroundModel::load(data) {
        let text = model.snapshot();
        let again = BackgroundModel::load(text.as_bytes()).expect("snapshot loads");
        assert_eq!(again.snapshot(), text);
    }
});
