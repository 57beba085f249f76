#pragma once

#include "cyclight/bitword.hpp"
#include "cyclight/channel.hpp"
#include "cyclight/codebook.hpp"
#include "cyclight/codebook_json.hpp"
#include "cyclight/codec.hpp"
#include "cyclight/error.hpp"
#include "cyclight/pose.hpp"
#include "cyclight/scenario.hpp"
#include "cyclight/signal.hpp"
#include "cyclight/trace_csv.hpp"
