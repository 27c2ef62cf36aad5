#include "avp/labels.hpp"

#include "avp/errors.hpp"

namespace avp {

WeakLabel weak_from_dense(const DenseLabels& dense) {
  if (dense.visual.rows() != dense.audio.rows() || dense.visual.cols() != dense.audio.cols()) {
    throw DimensionError("weak_from_dense: audio and visual label shapes differ");
  }
  WeakLabel weak = WeakLabel::none(dense.classes());
  for (std::size_t t = 0; t < dense.segments(); ++t) {
    for (std::size_t c = 0; c < dense.classes(); ++c) {
      if (dense.audio(t, c) || dense.visual(t, c)) weak.classes[c] = 1;
    }
  }
  return weak;
}

}  // namespace avp
