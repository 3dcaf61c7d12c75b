#pragma once

#include "sinc/error.hpp"
#include "sinc/fft.hpp"
#include "sinc/spectral.hpp"
#include "sinc/losses.hpp"
#include "sinc/diffcore.hpp"
#include "sinc/clip.hpp"
#include "sinc/model.hpp"
#include "sinc/adamw.hpp"
#include "sinc/params_io.hpp"
#include "sinc/rng.hpp"
#include "sinc/synthdata.hpp"
#include "sinc/augment.hpp"
#include "sinc/eval.hpp"
#include "sinc/train.hpp"
#include "sinc/dataset_io.hpp"
#include "sinc/ablation.hpp"
#include "sinc/run_config.hpp"
#include "sinc/gradcheck.hpp"
