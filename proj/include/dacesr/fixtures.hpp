#pragma once

#include <cstdint>
#include <vector>

#include "dacesr/image.hpp"

namespace dacesr::fixtures {

/// Procedurally generated corpus (gradients, checkerboards, wave textures,
/// blob scenes), seeded and fully offline. Default matches the bundled
/// 64-image corpus the pipeline and tests run on.
std::vector<ImageTensor> make_fixture_corpus(uint64_t seed, int count = 64,
                                             int size = 128);

/// Single smooth-gradient fixture used by codec bounds tests.
ImageTensor make_gradient(int height, int width);

}  // namespace dacesr::fixtures
