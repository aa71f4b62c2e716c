#pragma once

#include "webtopic/chunker.hpp"
#include "webtopic/config.hpp"
#include "webtopic/conformance.hpp"
#include "webtopic/corpus.hpp"
#include "webtopic/dbscan.hpp"
#include "webtopic/error.hpp"
#include "webtopic/eval.hpp"
#include "webtopic/fetch.hpp"
#include "webtopic/html.hpp"
#include "webtopic/icl.hpp"
#include "webtopic/io.hpp"
#include "webtopic/lib_model.hpp"
#include "webtopic/parallel.hpp"
#include "webtopic/pca.hpp"
#include "webtopic/protocol.hpp"
#include "webtopic/random.hpp"
#include "webtopic/sampling.hpp"
#include "webtopic/scoring.hpp"
#include "webtopic/svm.hpp"
#include "webtopic/tfidf.hpp"
#include "webtopic/unicode.hpp"
#include "webtopic/url.hpp"
