use mixflow_core::construct::*;
use mixflow_core::markov::*;
use mixflow_core::mixing::snake_mass_vector;
use mixflow_core::strips::*;
use mixflow_core::{Grid, Rect, RectUnion, Scalar};

fn main() {
    let delta = Scalar::ratio(1, 8);
    let (_, cyc) = snake_cycle_schedule(4, &Scalar::zero(), &Scalar::one()).unwrap();
    let mix = build_strong_mixing(&cyc, Grid::new(4), &delta).unwrap();
    let map = mix.schedule.time_one_map();
    let g = Grid::new(4);
    let model = build_model(16, &mix.snake_shift).unwrap();
    let a = RectUnion::single(g.square_linear(mix.snake[0]).unwrap());
    let bsq = g.square_linear(mix.snake[9]).unwrap();
    let b = RectUnion::single(Rect {
        x_lo: bsq.x_lo.clone(),
        x_hi: &bsq.x_lo + &Scalar::ratio(1, 64),
        y_lo: bsq.y_lo.clone(),
        y_hi: &bsq.y_lo + &Scalar::ratio(1, 64),
    });
    let prod = a.area() * b.area();
    let ia = mix.snake.iter().position(|&s| s == mix.snake[0]).unwrap();
    let mut packed = StripSet::from_rect_union(&b, g).unwrap();
    // geometric series to n=15 with onset detection, then matrix extension
    let mut mass: Option<mixflow_core::markov::MassVector> = None;
    for n in 1..=48usize {
        if let Some(ref mut m) = mass {
            *m = model.evolve(m, 1);
        }
        if n <= 14 {
            packed = strip_pushforward(&map, &packed, 40_000_000).unwrap();
            let geo = packed.intersection_area(&a).unwrap() - prod.clone();
            match &mass {
                Some(m) => {
                    let mat = &m.0[ia] - &prod;
                    assert_eq!(geo, mat, "mass identity broke at n={n}");
                }
                None => {
                    if packed.is_full_width() {
                        mass = Some(snake_mass_vector(&packed.masses_per_square(), &mix.snake));
                        println!("# onset at n={n}");
                    }
                }
            }
            println!("{n} {} geo", geo.to_fraction_string());
        } else {
            let m = mass.as_ref().expect("onset reached");
            let mat = &m.0[ia] - &prod;
            println!("{n} {} mat", mat.to_fraction_string());
        }
    }
}
