use avdecode_bench::{random_grid, utterance};
use avdecode_core::wer::align_text;
use avdecode_core::{ctc_forward_loss, ctc_gradient, decode, DecoderConfig, Vocabulary};
use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};

fn ctc(c: &mut Criterion) {
    let layout = Vocabulary::default().layout();
    let mut group = c.benchmark_group("ctc");
    for frames in [50, 200] {
        let grid = random_grid(1, layout, frames);
        let target: Vec<usize> = (0..frames / 4).map(|i| i % 26).collect();
        group.bench_with_input(BenchmarkId::new("forward", frames), &frames, |b, _| {
            b.iter(|| ctc_forward_loss(black_box(&grid), black_box(&target)).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("gradient", frames), &frames, |b, _| {
            b.iter(|| ctc_gradient(black_box(&grid), black_box(&target)).unwrap())
        });
    }
    group.finish();
}

fn joint_decode(c: &mut Criterion) {
    let (grid, _, scorer) = utterance(7);
    let mut group = c.benchmark_group("decode");
    for width in [1, 5, 10] {
        let config = DecoderConfig { beam_width: width, ..Default::default() };
        group.bench_with_input(BenchmarkId::new("beam", width), &width, |b, _| {
            b.iter(|| decode(black_box(&grid), &scorer, &config).unwrap())
        });
    }
    group.finish();
}

fn wer(c: &mut Criterion) {
    let r = "TRAVEL THREE MILES FURTHER WEST AND YOU DO GET MORE FOR YOUR MONEY HERE";
    let h = "TRAVEL THREE MILES URBER WEST AND YOU DO GET MORE FOR YOUR MONEY HERE";
    c.bench_function("wer/align", |b| b.iter(|| align_text(black_box(r), black_box(h))));
}

criterion_group!(benches, ctc, joint_decode, wer);
criterion_main!(benches);
