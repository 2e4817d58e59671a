/** Typed client for the outfit-compatibility service endpoints. */

export interface UiItem {
  id: string;
  product_type: string;
  category: string;
  title: string | null;
  cluster: number | null;
  hero?: boolean;
}

export interface NextEvaluation {
  outfit: { outfit_id: string; items: UiItem[] } | null;
  progress: { rated: number; total: number };
  done: boolean;
}

export interface Neighbor extends UiItem {
  score: number;
}

export interface NeighborsResponse {
  query: UiItem;
  neighbors: Neighbor[];
}

export interface ProjectionPoint extends UiItem {
  x: number;
  y: number;
}

export interface GroupStats {
  mean: number;
  var_user: number;
  var_outfit: number;
  var_residual: number;
  se_mean: number;
  n_users: number;
  n_outfits: number;
  n_observations: number;
}

export interface AbTestResult {
  control: GroupStats;
  test: GroupStats;
  relative_difference_pct: number;
  t_statistic: number | null;
  p_value: number | null;
  no_variance: boolean;
  per_template: Record<string, AbTestResult>;
}

export interface RatingAck {
  count: number;
  overwrote: boolean;
}

export class ApiError extends Error {
  constructor(public status: number, public detail: string) {
    super(`HTTP ${status}: ${detail}`);
  }
}

type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export class Api {
  constructor(
    private baseUrl: string = "",
    private fetchImpl: FetchLike = (url, init) => fetch(url, init),
  ) {}

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    const resp = await this.fetchImpl(this.baseUrl + path, init);
    if (!resp.ok) {
      let detail = resp.statusText;
      try {
        const body = await resp.json();
        if (body && body.detail) detail = String(body.detail);
      } catch {
        /* non-JSON error body */
      }
      throw new ApiError(resp.status, detail);
    }
    return (await resp.json()) as T;
  }

  items(): Promise<{ items: UiItem[]; department: string }> {
    return this.request("/items");
  }

  neighbors(itemId: string, opts: { type?: string; k?: number } = {}): Promise<NeighborsResponse> {
    const params = new URLSearchParams();
    if (opts.type) params.set("type", opts.type);
    if (opts.k !== undefined) params.set("k", String(opts.k));
    const query = params.toString();
    return this.request(`/items/${encodeURIComponent(itemId)}/neighbors${query ? "?" + query : ""}`);
  }

  projection(method: "pca" | "tsne" = "pca", seed = 0): Promise<{ method: string; points: ProjectionPoint[] }> {
    return this.request(`/projection?method=${method}&seed=${seed}`);
  }

  scoreOutfit(heroId: string, stylingIds: string[]): Promise<{ logit: number; score: number }> {
    return this.request("/outfits/score", {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ hero_id: heroId, styling_ids: stylingIds }),
    });
  }

  evaluationNext(userId: string): Promise<NextEvaluation> {
    return this.request(`/evaluation/next?user=${encodeURIComponent(userId)}`);
  }

  postRating(userId: string, outfitId: string, rating: 0 | 1): Promise<RatingAck> {
    return this.request("/ratings", {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ user_id: userId, outfit_id: outfitId, rating }),
    });
  }

  abtestResults(): Promise<AbTestResult> {
    return this.request("/abtest/results");
  }
}
